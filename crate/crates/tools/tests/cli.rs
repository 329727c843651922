use std::path::PathBuf;
use std::process::{Command, Output};

use vcsp_tools::Report;

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name).display().to_string()
}

fn vcsp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vcsp")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Report {
    let out = vcsp(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    Report::parse(&String::from_utf8(out.stdout).unwrap())
}

fn code(args: &[&str]) -> (i32, String) {
    let out = vcsp(args);
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn analyze_verdicts() {
    let r = ok(&["analyze", &data("submodular.lang")]);
    assert_eq!(r.get("verdict"), Some("SA(3)-solvable (BWC satisfied up to 4)"));
    assert!(r.get("caveat").unwrap().contains("3..=4"));
    let r = ok(&["analyze", &data("z2_equations.lang")]);
    assert_eq!(r.get("bwc.arity.3"), Some("wnu in supp (support 1)"));
    assert!(r.get("verdict").unwrap().starts_with("BWC violated at arity 4"));
    let r = ok(&["analyze", &data("empty.lang")]);
    assert!(r.get("verdict").unwrap().contains("BWC satisfied"));
}

#[test]
fn sa_gap_pair() {
    let (lang, inst) = (data("parity.lang"), data("parity_pair.inst"));
    let r = ok(&["relax", "--level", "1", &lang, &inst]);
    assert_eq!((r.get("lp_opt"), r.get("vcspopt"), r.get("verdict")), (Some("0"), Some("inf"), Some("GAP")));
    let r = ok(&["relax", "--level", "2", &lang, &inst]);
    assert_eq!((r.get("lp_opt"), r.get("verdict")), (Some("inf"), Some("NO GAP")));
}

#[test]
fn lasserre_at_full_level_matches_oracle() {
    let r = ok(&["relax", "--mode", "las", "--level", "2", &data("chain.lang"), &data("single.inst")]);
    let v: f64 = r.get("sdp_opt").unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!((v - 0.0).abs() < 1e-6);
    assert_eq!(r.get("verdict"), Some("NO GAP"));
    assert!(r.get("sdp_opt").unwrap().contains("approx"));
}

#[test]
fn equality_reduction_writes_target() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let r = ok(&["reduce", "--type", "eq", "--verify", "--out-dir", &out, &data("chain.lang"), &data("eq_chain.inst")]);
    assert_eq!(r.get("oracle.equal"), Some("true"));
    assert_eq!(r.get("target.vars"), Some("2"));
    let inst = std::fs::read_to_string(dir.path().join("target.inst")).unwrap();
    assert!(inst.starts_with("vars 2\n"));
    assert!(dir.path().join("target.lang").exists());
    assert_eq!(std::fs::read_to_string(dir.path().join("report.txt")).unwrap(), r.to_string());
}

#[test]
fn verify_identity_and_expressibility() {
    for (kind, extra) in [("identity", vec![]), ("express", vec!["--gadget".to_string(), data("chain.gad")])] {
        let mut args = vec!["verify", "--type", kind];
        args.extend(extra.iter().map(String::as_str));
        let (lang, inst) = (data("chain.lang"), data(if kind == "identity" { "single.inst" } else { "chain.inst" }));
        args.extend([lang.as_str(), inst.as_str()]);
        let r = ok(&args);
        assert_eq!(r.get("verdict"), Some("PASS"), "{kind}: {r}");
        for key in ["transport.target_residual", "transport.target_l7_residual"] {
            let v: f64 = r.get(key).unwrap().parse().unwrap();
            assert!(v <= 1e-6, "{kind} {key} = {v}");
        }
        assert_eq!(r.get("transport.objective_bound"), Some("true"));
    }
}

#[test]
fn interpretation_opt_and_feas_reductions() {
    let r = ok(&[
        "reduce",
        "--type",
        "interp",
        "--verify",
        "--interpretation",
        &data("z2_in_three.interp"),
        "--gadget-language",
        &data("three.lang"),
        &data("parity.lang"),
        &data("parity_mix.inst"),
    ]);
    assert_eq!(r.get("verdict"), Some("PASS"), "{r}");
    assert_eq!(r.get("target.domain"), Some("3"));
    for (kind, inst) in [("opt", "opt.inst"), ("feas", "feas.inst")] {
        let r = ok(&["reduce", "--type", kind, "--phi", "f", "--verify", &data("phi.lang"), &data(inst)]);
        assert_eq!(r.get("verdict"), Some("PASS"), "{r}");
        assert_eq!(r.get("reduction.construction"), Some("constructed, verified empirically"));
    }
}

#[test]
fn exhausted_gap_search_is_inconclusive() {
    let r = ok(&["gapsearch", "--budget", "1", "--n-max", "6"]);
    assert_eq!(r.get("search.exhausted"), Some("true"));
    assert_eq!(r.get("verdict"), Some("inconclusive"));
    assert!(r.get("caveat").is_some());
}

#[test]
fn gap_search_writes_reproduction_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let r = ok(&["gapsearch", "--family", "kxor", "--level", "4", "--n-min", "4", "--n-max", "4", "--samples", "2", "--out-dir", &out]);
    assert_eq!(r.get("verdict"), Some("no-gap"));
    let lang = vcsp_tools::format::parse_language(&std::fs::read_to_string(dir.path().join("equations.lang")).unwrap()).unwrap();
    for i in 0..2 {
        let text = std::fs::read_to_string(dir.path().join(format!("instance_{i}.inst"))).unwrap();
        assert!(vcsp_tools::format::parse_instance(&text, &lang).is_ok());
    }
}

#[test]
fn reports_are_reproducible() {
    let args = ["gapsearch", "--family", "kxor", "--level", "3", "--n-min", "3", "--n-max", "4", "--seed", "5"];
    let a = vcsp(&args).stdout;
    assert_eq!(a, vcsp(&args).stdout);
    let r = Report::parse(&String::from_utf8(a).unwrap());
    assert_eq!(r.get("config.seed"), Some("5"));
    assert_eq!(r.get("caps.las_classes"), Some("6000"));
    assert!(r.get("tolerance.residual").is_some());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.lang");
    std::fs::write(&bad, "domain 2\nrelation r 2\n0 : 1\nend\n").unwrap();
    let (c, err) = code(&["analyze", bad.to_str().unwrap()]);
    assert_eq!(c, 2);
    assert!(err.contains("bad.lang:3: expected 2 labels"), "{err}");

    // Las(3) over 30 Boolean variables exceeds the index cap
    let big = dir.path().join("big.inst");
    let mut text = String::from("vars 30\n");
    for v in 0..29 {
        text.push_str(&format!("constraint imp {v} {}\n", v + 1));
    }
    std::fs::write(&big, text).unwrap();
    let (c, err) = code(&["relax", "--mode", "las", "--level", "3", &data("chain.lang"), big.to_str().unwrap()]);
    assert_eq!(c, 3, "{err}");

    let (c, err) = code(&["relax", "--mode", "las", "--level", "2", "--max-iter", "1", &data("chain.lang"), &data("single.inst")]);
    assert_eq!(c, 4, "{err}");

    let (c, _) = code(&["reduce", "--type", "opt", &data("phi.lang"), &data("opt.inst")]);
    assert_eq!(c, 2);
    let (c, _) = code(&["relax", "--subsets", "sideways", &data("chain.lang"), &data("single.inst")]);
    assert_eq!(c, 2);
}
