//! The `analyze`, `relax`, `reduce`, `verify` and `gapsearch` workflows.
//! Each returns a [`Report`] that starts with the resolved configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use vcsp_core::algebra::{compute_core, find_wnu_in_supp, Operation, WnuOptions};
use vcsp_core::equations::{build_equation_language, gap_search, make_group, Family, GapSearch, GapVerdict};
use vcsp_core::lasserre::{build_las, check_residuals, solve_sdp, verify_l7, SdpOptions, SdpOutcome};
use vcsp_core::model::decode_tuple;
use vcsp_core::reductions::{
    apply_interpretation, reduce_equality, reduce_expressibility, reduce_feas, reduce_opt, reduce_with_gadgets,
    transport_levels, transport_solution, verify_reduction, ReductionTrace, ValueMap,
};
use vcsp_core::sherali_adams::{build_sa, solve_lp_exact};
use vcsp_core::value::{format_rational, rational_to_f64};
use vcsp_core::{Caps, Error, ExtValue, Instance, Language, SubsetMode};

use crate::error::ToolError;
use crate::format::{
    language_of, load, load_interpretation, parse_gadget, parse_instance, parse_language, parse_operations,
    write_instance, write_language,
};
use crate::report::{approx, exact, sci, Report};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relaxation {
    Sa,
    Las,
}

impl Relaxation {
    fn name(self) -> &'static str {
        match self {
            Relaxation::Sa => "sa",
            Relaxation::Las => "las",
        }
    }
}

/// The fully resolved settings of one run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: String,
    pub inputs: Vec<(String, PathBuf)>,
    pub level: usize,
    pub relaxation: Relaxation,
    pub eps: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub subsets: SubsetMode,
    pub out_dir: Option<PathBuf>,
    pub caps: Caps,
    pub m_max: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sdp = SdpOptions::default();
        RunConfig {
            command: String::new(),
            inputs: Vec::new(),
            level: 3,
            relaxation: Relaxation::Sa,
            eps: sdp.eps,
            max_iter: sdp.max_iter,
            seed: 0,
            subsets: SubsetMode::Full,
            out_dir: None,
            caps: Caps::default(),
            m_max: 4,
        }
    }
}

impl RunConfig {
    pub fn sdp_options(&self) -> SdpOptions {
        SdpOptions { eps: self.eps, max_iter: self.max_iter, ..SdpOptions::default() }
    }

    fn tol(&self) -> f64 {
        10.0 * self.eps
    }

    /// Config, caps and tolerances, as the head of every report.
    pub fn echo(&self) -> Report {
        let mut r = Report::new();
        r.put("config.command", &self.command);
        for (name, path) in &self.inputs {
            r.put(format!("config.input.{name}"), path.display());
        }
        r.put("config.level", self.level)
            .put("config.mode", self.relaxation.name())
            .put("config.eps", format!("{:e}", self.eps))
            .put("config.max_iter", self.max_iter)
            .put("config.seed", self.seed)
            .put("config.subsets", subsets_label(self.subsets))
            .put("config.out_dir", self.out_dir.as_ref().map_or("-".into(), |p| p.display().to_string()))
            .put("config.m_max", self.m_max);
        let c = &self.caps;
        r.put("caps.enumeration", c.enumeration)
            .put("caps.operations", c.operations)
            .put("caps.tuple_combinations", c.tuple_combinations)
            .put("caps.sa_columns", c.sa_columns)
            .put("caps.las_indices", c.las_indices)
            .put("caps.las_classes", c.las_classes)
            .put("caps.table", c.table)
            .put("caps.copies", c.copies);
        let sdp = self.sdp_options();
        r.put("tolerance.residual", format!("{:e}", self.tol()))
            .put("tolerance.delta_inf", format!("{:e}", sdp.delta_inf));
        r
    }

    fn write(&self, name: &str, contents: &str) -> Result<Option<PathBuf>, ToolError> {
        let Some(dir) = &self.out_dir else { return Ok(None) };
        std::fs::create_dir_all(dir).map_err(|e| ToolError::Io { path: dir.clone(), source: e })?;
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(|e| ToolError::Io { path: path.clone(), source: e })?;
        Ok(Some(path))
    }
}

fn subsets_label(m: SubsetMode) -> &'static str {
    match m {
        SubsetMode::Full => "full",
        SubsetMode::Scopes => "scopes (weaker relaxation)",
    }
}

fn core_err(context: impl Into<String>) -> impl FnOnce(Error) -> ToolError {
    let context = context.into();
    move |e| ToolError::core(context, e)
}

/// `vcspopt` by enumeration; `None` when the enumeration cap forbids it.
fn oracle(inst: &Instance, caps: &Caps) -> Result<Option<ExtValue>, ToolError> {
    match inst.brute_force_opt(caps) {
        Ok((v, _)) => Ok(Some(v)),
        Err(e) if e.is_cap_exceeded() => Ok(None),
        Err(e) => Err(ToolError::core("brute force", e)),
    }
}

fn oracle_label(v: &Option<ExtValue>) -> String {
    v.as_ref().map_or("n/a (enumeration cap)".into(), exact)
}

pub fn analyze(cfg: &RunConfig, lang_path: &Path, ops_path: Option<&Path>, idempotent: bool) -> Result<Report, ToolError> {
    let lang = load(lang_path, parse_language)?;
    let ops: Option<Vec<Operation>> = ops_path.map(|p| load(p, parse_operations)).transpose()?;
    let mut r = cfg.echo();
    r.put("language.domain", lang.domain()).put("language.relations", lang.len());
    let core = compute_core(&lang, &cfg.caps).map_err(core_err("core computation"))?;
    let labels = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
    r.put("core.is_core", core.is_core)
        .put("core.domain", labels(&core.core_domain))
        .put("core.map", labels(&core.map));
    if let Some(w) = &core.witness {
        let names: Vec<&str> = w.support().map(|f| f.name()).collect();
        r.put("core.witness", names.join(" "));
    }
    if ops.is_some() && !core.is_core {
        return Err(ToolError::Config("candidate operations are only supported for languages that are already cores".into()));
    }
    r.put("bwc.m_max", cfg.m_max).put("bwc.idempotent", idempotent);
    let mut violated = None;
    for m in 3..=cfg.m_max {
        let candidates = ops.as_ref().map(|o| o.iter().filter(|f| f.arity() == m).cloned().collect());
        let opts = WnuOptions { idempotent, candidates };
        let w = find_wnu_in_supp(&core.core, m, &opts, &cfg.caps).map_err(core_err(format!("WNU search at arity {m}")))?;
        match w {
            Some(w) => r.put(format!("bwc.arity.{m}"), format!("wnu in supp (support {})", w.weights().len())),
            None => {
                violated.get_or_insert(m);
                r.put(format!("bwc.arity.{m}"), "no wnu in supp")
            }
        };
    }
    match violated {
        None => r.put("verdict", format!("SA(3)-solvable (BWC satisfied up to {})", cfg.m_max)),
        Some(m) => r.put("verdict", format!("BWC violated at arity {m} => linear Lasserre levels required")),
    };
    r.put(
        "caveat",
        format!("bounded check: WNUs searched for arities 3..={} only; the condition quantifies over every arity >= 3", cfg.m_max),
    );
    Ok(r)
}

pub fn relax(cfg: &RunConfig, lang_path: &Path, inst_path: &Path) -> Result<Report, ToolError> {
    let lang = load(lang_path, parse_language)?;
    let inst = load(inst_path, |t| parse_instance(t, &lang))?;
    let mut r = cfg.echo();
    r.put("instance.vars", inst.n()).put("instance.constraints", inst.constraints().len());
    let opt = oracle(&inst, &cfg.caps)?;
    r.put("vcspopt", oracle_label(&opt));
    if cfg.subsets == SubsetMode::Scopes {
        r.put("relaxation.note", "weaker relaxation (scopes mode)");
    }
    let gap = match cfg.relaxation {
        Relaxation::Sa => {
            let model = build_sa(&inst, cfg.level, cfg.subsets, &cfg.caps).map_err(core_err("SA model"))?;
            let sol = solve_lp_exact(&model);
            r.put("lp.columns", model.n_columns())
                .put("lp.rows", model.lp().n_rows())
                .put("lp.pivots", sol.stats.pivots)
                .put("lp_opt", exact(&sol.value));
            if sol.is_feasible() {
                let mut dump = String::from("# block vars : labels : lambda\n");
                for (b, block) in model.augmentation().blocks.iter().enumerate() {
                    for (code, l) in sol.lambda[b].iter().enumerate() {
                        if !num_traits::Zero::is_zero(l) {
                            let t = decode_tuple(code, inst.d(), block.vars.len());
                            let _ = writeln!(dump, "{:?} : {t:?} : {}", block.vars, format_rational(l));
                        }
                    }
                }
                if let Some(p) = cfg.write("solution.txt", &dump)? {
                    r.put("solution_file", p.display());
                }
            }
            opt.as_ref().map(|o| sol.value < *o)
        }
        Relaxation::Las => {
            let model = build_las(&inst, cfg.level, cfg.subsets, &cfg.caps).map_err(core_err("Lasserre model"))?;
            r.put("sdp.indices", model.n_indices()).put("sdp.classes", model.n_classes());
            let v = match solve_sdp(&model, &cfg.sdp_options()) {
                SdpOutcome::Feasible(s) => {
                    let res = check_residuals(&model, &s.gram).max();
                    let l7 = verify_l7(&model, &s.gram).max_residual;
                    r.put("sdp_opt", approx(s.value, cfg.eps))
                        .put("sdp.iterations", s.diagnostics.iterations)
                        .put("sdp.residual", sci(res))
                        .put("sdp.l7_residual", sci(l7));
                    let mut dump = String::from("# class vars : labels : moment\n");
                    for (c, m) in s.moments.iter().enumerate() {
                        let (vars, labels) = model.class_label(c);
                        let _ = writeln!(dump, "{vars:?} : {labels:?} : {m:.12e}");
                    }
                    if let Some(p) = cfg.write("solution.txt", &dump)? {
                        r.put("solution_file", p.display());
                    }
                    s.value
                }
                SdpOutcome::Infeasible { exact, diagnostics } => {
                    r.put("sdp_opt", "inf")
                        .put("sdp.infeasibility", if exact { "exact (presolve)" } else { "numerical (residual margin)" })
                        .put("sdp.iterations", diagnostics.iterations);
                    f64::INFINITY
                }
                SdpOutcome::NotConverged(d) => {
                    return Err(ToolError::core(
                        "Lasserre solve",
                        Error::NonConvergence(format!(
                            "{} iterations, primal residual {:e}, dual residual {:e}",
                            d.iterations, d.primal_residual, d.dual_residual
                        )),
                    ))
                }
            };
            opt.as_ref().map(|o| match o {
                ExtValue::Infinite => v.is_finite(),
                ExtValue::Finite(x) => v < rational_to_f64(x) - cfg.tol(),
            })
        }
    };
    r.put(
        "verdict",
        match gap {
            Some(true) => "GAP",
            Some(false) => "NO GAP",
            None => "unknown (no oracle value)",
        },
    );
    Ok(r)
}

/// The reduction to apply in `reduce` / `verify`.
#[derive(Clone, Debug)]
pub enum ReduceKind {
    Identity,
    Express { gadgets: Vec<PathBuf>, gadget_language: Option<PathBuf> },
    /// User-supplied gadgets whose tables need not match (core with constants).
    Custom { gadgets: Vec<PathBuf>, gadget_language: Option<PathBuf> },
    Eq,
    Interp { interpretation: PathBuf, gadget_language: PathBuf },
    Opt { phi: String },
    Feas { phi: String },
}

impl ReduceKind {
    fn name(&self) -> &'static str {
        match self {
            ReduceKind::Identity => "identity",
            ReduceKind::Express { .. } => "express",
            ReduceKind::Custom { .. } => "custom",
            ReduceKind::Eq => "eq",
            ReduceKind::Interp { .. } => "interp",
            ReduceKind::Opt { .. } => "opt",
            ReduceKind::Feas { .. } => "feas",
        }
    }
}

fn build_trace(cfg: &RunConfig, lang: &Language, inst: &Instance, kind: &ReduceKind) -> Result<ReductionTrace, ToolError> {
    let caps = &cfg.caps;
    let ctx = || format!("{} reduction", kind.name());
    let gadgets = |paths: &[PathBuf], glang: &Option<PathBuf>| -> Result<_, ToolError> {
        let gl = match glang {
            Some(p) => load(p, parse_language)?,
            None => lang.clone(),
        };
        paths.iter().map(|p| load(p, |t| parse_gadget(t, &gl))).collect::<Result<Vec<_>, _>>()
    };
    let phi_of = |name: &str| {
        lang.get(name)
            .cloned()
            .ok_or_else(|| ToolError::Config(format!("relation `{name}` not found in the language")))
    };
    Ok(match kind {
        ReduceKind::Identity => ReductionTrace::identity(inst),
        ReduceKind::Express { gadgets: g, gadget_language } => {
            reduce_expressibility(inst, &gadgets(g, gadget_language)?, caps).map_err(core_err(ctx()))?
        }
        ReduceKind::Custom { gadgets: g, gadget_language } => {
            reduce_with_gadgets(inst, &gadgets(g, gadget_language)?, caps).map_err(core_err(ctx()))?
        }
        ReduceKind::Eq => reduce_equality(inst),
        ReduceKind::Interp { interpretation, gadget_language } => {
            let gl = load(gadget_language, parse_language)?;
            let interp = load_interpretation(interpretation, &gl, lang, caps)?;
            apply_interpretation(&interp, inst).map_err(core_err(ctx()))?
        }
        ReduceKind::Opt { phi } => reduce_opt(inst, &phi_of(phi)?, caps).map_err(core_err(ctx()))?,
        ReduceKind::Feas { phi } => reduce_feas(inst, &phi_of(phi)?, caps).map_err(core_err(ctx()))?,
    })
}

fn describe_value_map(m: &ValueMap) -> String {
    match m {
        ValueMap::Exact => "exact".into(),
        ValueMap::Opt { copies, offset, threshold } => {
            format!("opt: copies {copies}, subtract {}, inf above {}", format_rational(offset), format_rational(threshold))
        }
        ValueMap::Feas { copies, offset, grid } => {
            format!("feas: subtract {}, divide by {copies}, floor to 1/{grid}", format_rational(offset))
        }
        ValueMap::Chain(ms) => ms.iter().map(describe_value_map).collect::<Vec<_>>().join(" then "),
    }
}

fn reduce_report(cfg: &RunConfig, lang_path: &Path, inst_path: &Path, kind: &ReduceKind, verify: bool) -> Result<(Report, ReductionTrace, bool), ToolError> {
    let lang = load(lang_path, parse_language)?;
    let inst = load(inst_path, |t| parse_instance(t, &lang))?;
    let trace = build_trace(cfg, &lang, &inst, kind)?;
    let mut r = cfg.echo();
    let (src, tgt) = (trace.source(), trace.target());
    r.put("reduction.type", kind.name())
        .put("source.vars", src.n())
        .put("source.constraints", src.constraints().len())
        .put("target.vars", tgt.n())
        .put("target.constraints", tgt.constraints().len())
        .put("target.domain", tgt.d())
        .put("reduction.parts", trace.parts().len())
        .put("reduction.value_map", describe_value_map(trace.value_map()));
    if matches!(kind, ReduceKind::Opt { .. } | ReduceKind::Feas { .. }) {
        r.put("reduction.construction", "constructed, verified empirically");
    }
    let (tlang, tinst) = language_of(tgt);
    if let Some(p) = cfg.write("target.lang", &write_language(&tlang))? {
        r.put("target.language_file", p.display());
    }
    if let Some(p) = cfg.write("target.inst", &write_instance(&tinst))? {
        r.put("target.instance_file", p.display());
    }
    let mut ok = true;
    if verify {
        let rep = verify_reduction(&trace, &cfg.caps).map_err(core_err("reduction verification"))?;
        r.put("oracle.source_vcspopt", exact(&rep.source_opt))
            .put("oracle.target_vcspopt", exact(&rep.target_opt))
            .put("oracle.recovered_vcspopt", exact(&rep.recovered_opt))
            .put("oracle.equal", rep.values_agree());
        for (name, checked, v) in [("a", rep.checked_a, &rep.a), ("b", rep.checked_b, &rep.b), ("c", rep.checked_c, &rep.c)] {
            match v {
                None => r.put(format!("condition.{name}"), format!("pass ({checked} checked)")),
                Some(w) => r.put(format!("condition.{name}"), format!("FAIL: {w}")),
            };
        }
        ok = rep.passed();
    } else {
        let (so, to) = (oracle(src, &cfg.caps)?, oracle(tgt, &cfg.caps)?);
        r.put("oracle.source_vcspopt", oracle_label(&so)).put("oracle.target_vcspopt", oracle_label(&to));
        if let (Some(s), Some(t)) = (&so, &to) {
            let rec = trace.recover_value(t);
            r.put("oracle.recovered_vcspopt", exact(&rec)).put("oracle.equal", *s == rec);
            ok = *s == rec;
        }
    }
    Ok((r, trace, ok))
}

pub fn reduce(cfg: &RunConfig, lang_path: &Path, inst_path: &Path, kind: &ReduceKind, verify: bool) -> Result<Report, ToolError> {
    let (mut r, _, ok) = reduce_report(cfg, lang_path, inst_path, kind, verify)?;
    r.put("verdict", if ok { "PASS" } else { "FAIL" });
    Ok(r)
}

/// `reduce --verify` plus solution transport from Las(2k) of the source to
/// Las(k') of the target.
pub fn verify(cfg: &RunConfig, lang_path: &Path, inst_path: &Path, kind: &ReduceKind, k_prime: usize) -> Result<Report, ToolError> {
    let (mut r, trace, mut ok) = reduce_report(cfg, lang_path, inst_path, kind, true)?;
    let (k, two_k) = transport_levels(&trace, k_prime);
    r.put("transport.k_prime", k_prime).put("transport.k", k).put("transport.source_level", two_k);
    let model = build_las(trace.source(), two_k, SubsetMode::Full, &cfg.caps).map_err(core_err("source Lasserre model"))?;
    match solve_sdp(&model, &cfg.sdp_options()) {
        SdpOutcome::Feasible(s) => {
            let t = transport_solution(&trace, &model, &s.gram, k_prime, &cfg.caps).map_err(core_err("transport"))?;
            let res = t.residuals.max();
            let objective = t.target_value <= t.source_value + 1e-5;
            r.put("transport.source_residual", sci(check_residuals(&model, &s.gram).max()))
                .put("transport.target_residual", sci(res))
                .put("transport.target_l7_residual", sci(t.l7.max_residual))
                .put("transport.source_value", approx(t.source_value, cfg.eps))
                .put("transport.target_value", approx(t.target_value, cfg.eps))
                .put("transport.objective_bound", objective)
                .put("transport.well_definedness", t.well_definedness.map_or("n/a (single admissible choice)".into(), sci));
            let wd = t.well_definedness.is_none_or(|w| w <= cfg.tol());
            ok &= res <= cfg.tol() && t.l7.max_residual <= cfg.tol() && objective && wd;
        }
        SdpOutcome::Infeasible { .. } => {
            r.put("transport", "not applicable (source relaxation infeasible)");
        }
        SdpOutcome::NotConverged(d) => {
            return Err(ToolError::core(
                "source Lasserre solve",
                Error::NonConvergence(format!("{} iterations, primal residual {:e}", d.iterations, d.primal_residual)),
            ))
        }
    }
    r.put("verdict", if ok { "PASS" } else { "FAIL" });
    Ok(r)
}

/// Parameters of `gapsearch` beyond the shared configuration.
#[derive(Clone, Debug)]
pub struct GapArgs {
    pub group: String,
    pub arity: usize,
    pub family: Family,
    pub n_min: usize,
    pub n_max: usize,
    pub samples: usize,
    pub budget: usize,
}

pub fn gapsearch(cfg: &RunConfig, args: &GapArgs) -> Result<Report, ToolError> {
    let group = make_group(&args.group).map_err(|e| ToolError::Config(e.to_string()))?;
    let lang = build_equation_language(&group, args.arity, &cfg.caps).map_err(core_err("equation language"))?;
    let params = GapSearch {
        family: args.family,
        level: cfg.level,
        mode: cfg.subsets,
        n_min: args.n_min,
        n_max: args.n_max,
        samples: args.samples,
        seed: cfg.seed,
        budget: args.budget,
        sdp: cfg.sdp_options(),
    };
    let out = gap_search(&lang, &params, &cfg.caps).map_err(core_err("gap search"))?;
    let mut r = cfg.echo();
    r.put("search.group", &group)
        .put("search.arity", args.arity)
        .put("search.family", match args.family {
            Family::Tseitin => "tseitin".to_string(),
            Family::Kxor { ratio } => format!("kxor (ratio {ratio})"),
        })
        .put("search.n_range", format!("{}..={}", args.n_min, args.n_max))
        .put("search.samples", args.samples)
        .put("search.budget", args.budget);
    let lang_file = cfg.write("equations.lang", &write_language(lang.language()))?;
    if let Some(p) = &lang_file {
        r.put("search.language_file", p.display());
    }
    for (i, rep) in out.reports.iter().enumerate() {
        let key = |k: &str| format!("instance.{i}.{k}");
        r.put(key("label"), &rep.label)
            .put(key("vars"), rep.instance.n())
            .put(key("constraints"), rep.instance.constraints().len())
            .put(key("vcspopt"), exact(&rep.vcspopt))
            .put(key("sdp_value"), rep.sdp_value.map_or("n/a (not converged)".into(), |v| approx(v, cfg.eps)))
            .put(key("residual"), rep.residual.map_or("-".into(), sci))
            .put(key("l7_residual"), rep.l7_residual.map_or("-".into(), sci))
            .put(key("verdict"), rep.verdict);
        if !rep.note.is_empty() {
            r.put(key("note"), &rep.note);
        }
        if let Some(p) = cfg.write(&format!("instance_{i}.inst"), &write_instance(&rep.instance))? {
            r.put(key("file"), p.display());
        }
    }
    let gaps = out.reports.iter().filter(|x| x.verdict == GapVerdict::Gap).count();
    r.put("search.examined", out.reports.len())
        .put("search.gaps", gaps)
        .put("search.exhausted", out.exhausted)
        .put("verdict", out.verdict);
    if out.verdict != GapVerdict::Gap {
        r.put("caveat", "gaps are only guaranteed for sufficiently large n; absence at desk scale is not a refutation");
    }
    Ok(r)
}
