//! Line-based text formats for languages, instances, gadgets, interpretations
//! and operation tables. `#` starts a comment; blank lines are ignored.
//!
//! ```text
//! domain 2
//! relation imp 2
//! 1 0 : 1
//! default : 0
//! end
//! ```
//!
//! Instances are `vars <n>` followed by `constraint <rel> <i_1> … <i_r>`;
//! gadgets prepend `gadget <rel> external <x_1> … <x_m>`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use vcsp_core::algebra::Operation;
use vcsp_core::model::{decode_tuple, encode_tuple};
use vcsp_core::reductions::{Gadget, Interpretation};
use vcsp_core::{Caps, ExtValue, Instance, Language, WeightedRelation};

use crate::error::ToolError;

/// A parse error at a 1-based line of an unnamed source.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

type Parsed<T> = Result<T, ParseError>;

fn err<T>(line: usize, msg: impl Into<String>) -> Parsed<T> {
    Err(ParseError { line, msg: msg.into() })
}

/// Non-empty lines with comments stripped, with their line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("");
        let toks: Vec<&str> = l.split_whitespace().collect();
        (!toks.is_empty()).then_some((i + 1, toks))
    })
}

fn number(line: usize, tok: &str, what: &str) -> Parsed<usize> {
    tok.parse().or_else(|_| err(line, format!("expected {what}, found `{tok}`")))
}

fn value(line: usize, tok: &str) -> Parsed<ExtValue> {
    tok.parse().or_else(|_| err(line, format!("cannot parse value `{tok}` (integer, p/q or inf)")))
}

/// Splits `a b c : v` into the label tokens and the value token.
fn row<'a>(line: usize, toks: &[&'a str]) -> Parsed<(Vec<&'a str>, &'a str)> {
    match toks.iter().position(|&t| t == ":") {
        Some(p) if p + 2 == toks.len() => Ok((toks[..p].to_vec(), toks[p + 1])),
        _ => err(line, "expected `<labels> : <value>`"),
    }
}

fn labels(line: usize, toks: &[&str], arity: usize, domain: usize) -> Parsed<Vec<usize>> {
    if toks.len() != arity {
        return err(line, format!("expected {arity} labels, found {}", toks.len()));
    }
    toks.iter()
        .map(|t| {
            let a = number(line, t, "a label")?;
            if a >= domain {
                return err(line, format!("label {a} outside the domain 0..{domain}"));
            }
            Ok(a)
        })
        .collect()
}

pub fn parse_language(text: &str) -> Parsed<Language> {
    let mut it = lines(text);
    let Some((l0, head)) = it.next() else { return err(1, "empty language file: expected `domain <d>`") };
    let domain = match head[..] {
        ["domain", d] => number(l0, d, "a domain size")?,
        _ => return err(l0, "expected `domain <d>`"),
    };
    if domain == 0 {
        return err(l0, "domain must be nonempty");
    }
    let mut lang = Language::new(domain);
    while let Some((l, toks)) = it.next() {
        let (name, arity) = match toks[..] {
            ["relation", name, arity] => (name, number(l, arity, "an arity")?),
            _ => return err(l, format!("expected `relation <name> <arity>`, found `{}`", toks.join(" "))),
        };
        let size = domain
            .checked_pow(arity as u32)
            .filter(|&s| s as u128 <= Caps::default().table)
            .map_or_else(|| err(l, format!("relation `{name}` table exceeds the table cap")), Ok)?;
        let mut rows: BTreeMap<usize, ExtValue> = BTreeMap::new();
        let mut default: Option<ExtValue> = None;
        let mut closed = false;
        for (lr, toks) in it.by_ref() {
            match toks[..] {
                ["end"] => {
                    closed = true;
                    break;
                }
                ["default", ":", v] => {
                    if default.is_some() {
                        return err(lr, format!("duplicate default in relation `{name}`"));
                    }
                    default = Some(value(lr, v)?);
                }
                _ => {
                    let (ls, v) = row(lr, &toks)?;
                    let t = labels(lr, &ls, arity, domain)?;
                    if rows.insert(encode_tuple(&t, domain), value(lr, v)?).is_some() {
                        return err(lr, format!("tuple {t:?} listed twice"));
                    }
                }
            }
        }
        if !closed {
            return err(l, format!("relation `{name}` is not terminated by `end`"));
        }
        let default = default.unwrap_or(ExtValue::Infinite);
        let table = (0..size).map(|c| rows.get(&c).cloned().unwrap_or_else(|| default.clone())).collect();
        let rel = WeightedRelation::new(name, arity, domain, table).or_else(|e| err(l, e.to_string()))?;
        lang.add(rel).or_else(|e| err(l, e.to_string()))?;
    }
    Ok(lang)
}

fn write_relation(out: &mut String, r: &WeightedRelation) {
    // the most frequent value becomes the default (first one on ties)
    let mut counts: Vec<(&ExtValue, usize)> = Vec::new();
    for v in r.table() {
        match counts.iter_mut().find(|(w, _)| *w == v) {
            Some(c) => c.1 += 1,
            None => counts.push((v, 1)),
        }
    }
    let default = counts.iter().fold(&counts[0], |best, c| if c.1 > best.1 { c } else { best }).0.clone();
    let _ = writeln!(out, "relation {} {}", r.name(), r.arity());
    for (code, v) in r.table().iter().enumerate() {
        if *v != default {
            let t = decode_tuple(code, r.domain(), r.arity());
            let t: Vec<String> = t.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{} : {v}", t.join(" "));
        }
    }
    let _ = writeln!(out, "default : {default}\nend");
}

pub fn write_language(lang: &Language) -> String {
    let mut out = format!("domain {}\n", lang.domain());
    for r in lang.relations() {
        out.push('\n');
        write_relation(&mut out, r);
    }
    out
}

fn parse_constraints<'a>(
    it: &mut impl Iterator<Item = (usize, Vec<&'a str>)>,
    lang: &Language,
    inst: &mut Instance,
) -> Parsed<()> {
    for (l, toks) in it {
        let ["constraint", name, scope @ ..] = &toks[..] else {
            return err(l, format!("expected `constraint <relation> <vars>`, found `{}`", toks.join(" ")));
        };
        let Some(rel) = lang.get(name) else { return err(l, format!("unknown relation `{name}`")) };
        if scope.len() != rel.arity() {
            return err(l, format!("relation `{name}` has arity {} but {} variables were given", rel.arity(), scope.len()));
        }
        let scope: Vec<usize> = scope
            .iter()
            .map(|t| {
                let v = number(l, t, "a variable index")?;
                if v >= inst.n() {
                    return err(l, format!("variable {v} out of range 0..{}", inst.n()));
                }
                Ok(v)
            })
            .collect::<Parsed<_>>()?;
        inst.add(rel.clone(), scope).or_else(|e| err(l, e.to_string()))?;
    }
    Ok(())
}

fn parse_vars(line: usize, toks: &[&str]) -> Parsed<usize> {
    match toks {
        ["vars", n] => number(line, n, "a variable count"),
        _ => err(line, "expected `vars <n>`"),
    }
}

/// Parses an instance whose relations are resolved in `lang`.
pub fn parse_instance(text: &str, lang: &Language) -> Parsed<Instance> {
    let mut it = lines(text);
    let Some((l0, head)) = it.next() else { return err(1, "empty instance file: expected `vars <n>`") };
    let mut inst = Instance::new(parse_vars(l0, &head)?, lang.domain());
    parse_constraints(&mut it, lang, &mut inst)?;
    Ok(inst)
}

fn write_constraints(out: &mut String, inst: &Instance) {
    for c in inst.constraints() {
        let vars: Vec<String> = c.scope().iter().map(usize::to_string).collect();
        let _ = writeln!(out, "constraint {} {}", c.relation().name(), vars.join(" "));
    }
}

pub fn write_instance(inst: &Instance) -> String {
    let mut out = format!("vars {}\n", inst.n());
    write_constraints(&mut out, inst);
    out
}

/// Parses a gadget whose template relations are resolved in `lang`.
pub fn parse_gadget(text: &str, lang: &Language) -> Parsed<Gadget> {
    let mut it = lines(text);
    let Some((l0, head)) = it.next() else { return err(1, "empty gadget file") };
    let (target, ext) = match &head[..] {
        ["gadget", name, "external", ext @ ..] if !ext.is_empty() => (*name, ext.to_vec()),
        _ => return err(l0, "expected `gadget <relation> external <x_1> … <x_m>`"),
    };
    let Some((l1, vars)) = it.next() else { return err(l0, "missing `vars <n>`") };
    let mut template = Instance::new(parse_vars(l1, &vars)?, lang.domain());
    let ext = ext.iter().map(|t| number(l0, t, "an external variable")).collect::<Parsed<Vec<_>>>()?;
    parse_constraints(&mut it, lang, &mut template)?;
    Gadget::new(target, template, ext).or_else(|e| err(l0, e.to_string()))
}

pub fn write_gadget(g: &Gadget) -> String {
    let ext: Vec<String> = g.externals().iter().map(usize::to_string).collect();
    let mut out = format!("gadget {} external {}\nvars {}\n", g.target(), ext.join(" "), g.template().n());
    write_constraints(&mut out, g.template());
    out
}

/// Operation tables over a common domain: `domain <d>`, then blocks
/// `op <name> <arity>` with one `<t_1> … <t_m> : <value>` row per tuple and
/// `end`.
pub fn parse_operations(text: &str) -> Parsed<Vec<Operation>> {
    let mut it = lines(text);
    let Some((l0, head)) = it.next() else { return Ok(Vec::new()) };
    let domain = match head[..] {
        ["domain", d] => number(l0, d, "a domain size")?,
        _ => return err(l0, "expected `domain <d>`"),
    };
    let mut ops = Vec::new();
    while let Some((l, toks)) = it.next() {
        let (name, arity) = match toks[..] {
            ["op", name, arity] => (name, number(l, arity, "an arity")?),
            _ => return err(l, "expected `op <name> <arity>`"),
        };
        let size = domain.checked_pow(arity as u32).filter(|&s| s <= 1 << 24).map_or_else(|| err(l, "operation table too large"), Ok)?;
        let mut table = vec![None; size];
        let mut closed = false;
        for (lr, toks) in it.by_ref() {
            if toks[..] == ["end"] {
                closed = true;
                break;
            }
            let (ls, v) = row(lr, &toks)?;
            let t = labels(lr, &ls, arity, domain)?;
            let v = labels(lr, &[v], 1, domain)?[0];
            let slot = &mut table[encode_tuple(&t, domain)];
            if slot.replace(v).is_some() {
                return err(lr, format!("tuple {t:?} listed twice"));
            }
        }
        if !closed {
            return err(l, format!("operation `{name}` is not terminated by `end`"));
        }
        let table: Vec<usize> = match table.iter().position(Option::is_none) {
            Some(c) => return err(l, format!("operation `{name}` has no row for {:?}", decode_tuple(c, domain, arity))),
            None => table.into_iter().flatten().collect(),
        };
        ops.push(Operation::new(name, arity, domain, table).or_else(|e| err(l, e.to_string()))?);
    }
    Ok(ops)
}

pub fn write_operations(domain: usize, ops: &[Operation]) -> String {
    let mut out = format!("domain {domain}\n");
    for f in ops {
        let _ = writeln!(out, "\nop {} {}", f.name(), f.arity());
        for (code, v) in f.table().iter().enumerate() {
            let t: Vec<String> = decode_tuple(code, domain, f.arity()).iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{} : {v}", t.join(" "));
        }
        out.push_str("end\n");
    }
    out
}

/// The language of an instance's relations, renaming clashes (`name~2`, …)
/// so that names are unique, and the instance rebuilt over it.
pub fn language_of(inst: &Instance) -> (Language, Instance) {
    let mut lang = Language::new(inst.d());
    let mut renamed: Vec<(Arc<WeightedRelation>, Arc<WeightedRelation>)> = Vec::new();
    let mut out = Instance::new(inst.n(), inst.d());
    for c in inst.constraints() {
        let r = c.relation();
        let mapped = match renamed.iter().find(|(a, _)| a == r) {
            Some((_, b)) => b.clone(),
            None => {
                let mut name = r.name().to_string();
                let mut i = 2;
                while lang.get(&name).is_some() {
                    name = format!("{}~{i}", r.name());
                    i += 1;
                }
                let b = lang.add((**r).clone().with_name(name)).expect("unique name and matching domain");
                renamed.push((r.clone(), b.clone()));
                b
            }
        };
        out.add(mapped, c.scope().to_vec()).expect("same scope");
    }
    (lang, out)
}

/// Reads a file, attaching the path to parse errors.
pub fn load<T>(path: &Path, parse: impl FnOnce(&str) -> Parsed<T>) -> Result<T, ToolError> {
    let text = std::fs::read_to_string(path).map_err(|e| ToolError::Io { path: path.to_path_buf(), source: e })?;
    parse(&text).map_err(|e| ToolError::Parse { path: path.to_path_buf(), line: e.line, msg: e.msg })
}

/// An interpretation file:
///
/// ```text
/// dim 1
/// map 0 : 0        # an element of S (dim labels) and its image under h
/// map 1 : 1
/// phi_s s.gad      # gadget files, relative to this file
/// eq eq.gad
/// gadget r.gad     # one per relation of the interpreted language
/// ```
///
/// Gadgets are resolved in `gadget_lang`; `target` is the interpreted language.
pub fn load_interpretation(path: &Path, gadget_lang: &Language, target: &Language, caps: &Caps) -> Result<Interpretation, ToolError> {
    let text = std::fs::read_to_string(path).map_err(|e| ToolError::Io { path: path.to_path_buf(), source: e })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let perr = |line: usize, msg: String| ToolError::Parse { path: path.to_path_buf(), line, msg };
    let mut dim = None;
    let (mut s, mut h) = (Vec::new(), Vec::new());
    let (mut phi_s, mut eq, mut gadgets) = (None, None, Vec::new());
    let gadget = |line: usize, file: &str| -> Result<Gadget, ToolError> {
        let p: PathBuf = base.join(file);
        if !p.exists() {
            return Err(perr(line, format!("gadget file `{}` not found", p.display())));
        }
        load(&p, |t| parse_gadget(t, gadget_lang))
    };
    for (l, toks) in lines(&text) {
        match &toks[..] {
            ["dim", d] => dim = Some(number(l, d, "a dimension").map_err(|e| perr(l, e.msg))?),
            ["map", rest @ ..] => {
                let d = dim.ok_or_else(|| perr(l, "`dim` must precede `map`".into()))?;
                let (ls, v) = row(l, rest).map_err(|e| perr(l, e.msg))?;
                s.push(labels(l, &ls, d, gadget_lang.domain()).map_err(|e| perr(l, e.msg))?);
                h.push(labels(l, &[v], 1, target.domain()).map_err(|e| perr(l, e.msg))?[0]);
            }
            ["phi_s", f] => phi_s = Some(gadget(l, f)?),
            ["eq", f] => eq = Some(gadget(l, f)?),
            ["gadget", f] => gadgets.push(gadget(l, f)?),
            _ => return Err(perr(l, format!("unexpected `{}`", toks.join(" ")))),
        }
    }
    let missing = |what: &str| perr(text.lines().count().max(1), format!("missing `{what}`"));
    let dim = dim.ok_or_else(|| missing("dim"))?;
    let phi_s = phi_s.ok_or_else(|| missing("phi_s"))?;
    let eq = eq.ok_or_else(|| missing("eq"))?;
    Interpretation::new(dim, gadget_lang.domain(), s, h, target, phi_s, eq, gadgets, caps)
        .map_err(|e| ToolError::core(format!("interpretation {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const IMP: &str = "# implication\ndomain 2\nrelation imp 2\n1 0 : 1\ndefault : 0\nend\n\nrelation le 2\n0 0 : 0\n0 1 : 0\n1 1 : 0\nend\n";

    #[test]
    fn parses_a_language() {
        let l = parse_language(IMP).unwrap();
        assert_eq!(l.len(), 2);
        assert_eq!(*l.get("imp").unwrap().value(&[1, 0]), ExtValue::int(1));
        assert_eq!(*l.get("imp").unwrap().value(&[0, 1]), ExtValue::zero());
        assert!(l.get("le").unwrap().value(&[1, 0]).is_infinite());
    }

    #[test]
    fn values_parse() {
        for (s, v) in [("1/2", ExtValue::ratio(1, 2)), ("-3", ExtValue::int(-3)), ("inf", ExtValue::Infinite)] {
            assert_eq!(value(1, s).unwrap(), v);
        }
        assert_eq!(value(7, "x").unwrap_err().line, 7);
    }

    #[test]
    fn arity_mismatch_reports_line() {
        let e = parse_language("domain 2\nrelation r 2\n0 : 1\nend\n").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.msg.contains("expected 2 labels"));
    }

    #[test]
    fn duplicate_default_is_rejected() {
        let e = parse_language("domain 2\nrelation r 1\ndefault : 0\ndefault : 1\nend\n").unwrap_err();
        assert_eq!(e.line, 4);
        assert!(e.msg.contains("duplicate default"));
    }

    #[test]
    fn missing_end_and_bad_header() {
        assert!(parse_language("domain 2\nrelation r 1\n0 : 1\n").unwrap_err().msg.contains("end"));
        assert_eq!(parse_language("\n\nrelation r 1\n").unwrap_err().line, 3);
    }

    #[test]
    fn instance_errors_carry_lines() {
        let l = parse_language(IMP).unwrap();
        let e = parse_instance("vars 3\nconstraint imp 0 1\nconstraint nope 1 2\n", &l).unwrap_err();
        assert_eq!((e.line, e.msg.as_str()), (3, "unknown relation `nope`"));
        let e = parse_instance("vars 3\nconstraint imp 0\n", &l).unwrap_err();
        assert_eq!(e.line, 2);
        assert!(e.msg.contains("arity 2"));
        let e = parse_instance("vars 2\nconstraint imp 0 2\n", &l).unwrap_err();
        assert!(e.msg.contains("out of range"));
    }

    #[test]
    fn gadget_round_trip() {
        let l = parse_language(IMP).unwrap();
        let text = "gadget chain external 0 1\nvars 3\nconstraint imp 0 2\nconstraint imp 2 1\n";
        let g = parse_gadget(text, &l).unwrap();
        assert_eq!(g.externals(), &[0, 1]);
        assert_eq!(g.aux(), &[2]);
        assert_eq!(write_gadget(&g), text);
    }

    #[test]
    fn operations_round_trip() {
        let ops = vec![Operation::min(2), Operation::majority(2)];
        let text = write_operations(2, &ops);
        assert_eq!(parse_operations(&text).unwrap(), ops);
        let e = parse_operations("domain 2\nop f 1\n0 : 1\nend\n").unwrap_err();
        assert!(e.msg.contains("no row"));
    }

    #[test]
    fn clashing_names_are_renamed() {
        let a = Arc::new(WeightedRelation::crisp_fn("r", 1, 2, |t| t[0] == 0).unwrap());
        let b = Arc::new(WeightedRelation::crisp_fn("r", 1, 2, |t| t[0] == 1).unwrap());
        let mut inst = Instance::new(2, 2);
        inst.add(a.clone(), vec![0]).unwrap();
        inst.add(b, vec![1]).unwrap();
        inst.add(a, vec![1]).unwrap();
        let (lang, renamed) = language_of(&inst);
        assert_eq!(lang.len(), 2);
        assert_eq!(lang.relations()[1].name(), "r~2");
        let back = parse_instance(&write_instance(&renamed), &parse_language(&write_language(&lang)).unwrap()).unwrap();
        assert_eq!(back, renamed);
    }

    fn arb_language() -> impl Strategy<Value = Language> {
        let v = prop_oneof![3 => (-5i64..6, 1i64..4).prop_map(|(n, d)| ExtValue::ratio(n, d)), 1 => Just(ExtValue::Infinite)];
        (2usize..4, proptest::collection::vec((1usize..3, proptest::collection::vec(v, 9)), 0..4)).prop_map(|(d, rels)| {
            let mut l = Language::new(d);
            for (i, (r, vals)) in rels.into_iter().enumerate() {
                let table = (0..d.pow(r as u32)).map(|c| vals[c % vals.len()].clone()).collect();
                l.add(WeightedRelation::new(format!("r{i}"), r, d, table).unwrap()).unwrap();
            }
            l
        })
    }

    proptest! {
        #[test]
        fn language_round_trip(l in arb_language()) {
            prop_assert_eq!(parse_language(&write_language(&l)).unwrap(), l);
        }

        #[test]
        fn instance_round_trip(l in arb_language(), picks in proptest::collection::vec((0usize..8, 0usize..5, 0usize..5), 0..6)) {
            prop_assume!(!l.is_empty());
            let mut inst = Instance::new(5, l.domain());
            for (r, a, b) in picks {
                let rel = &l.relations()[r % l.len()];
                let scope = [a, b][..rel.arity()].to_vec();
                inst.add(rel.clone(), scope).unwrap();
            }
            prop_assert_eq!(parse_instance(&write_instance(&inst), &l).unwrap(), inst);
        }
    }
}
