//! Acceptance suite: one PASS/FAIL line per criterion, run with the shipped
//! experiment defaults. Exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use cnce::cli::{
    self, bias_variance_from_scores, counterexample_from_scores, instdisc, phase_study, toy_mi_from_scores,
    toy_scores, Command, ExperimentConfig, InstdiscSettings, ToySettings, Variant,
};
use cnce::encoder::{loss_and_grad, Mlp};
use cnce::gaussian_toy::GaussianPairSpec;
use cnce::numerics::{logsumexp, Matrix, Rng};
use cnce::samplers::{lloyd_step, ring_select, within_cluster_ss, FifoQueue, RingSpec};

/// Reference value of the benchmark's mutual information, in nats.
const TRUE_MI: f64 = 0.02041;
const MI_TOL: f64 = 1e-5;
/// Lower edge of the accepted mean NCE estimate.
const NCE_FLOOR: f64 = 0.005;
/// Agreement of marginal and full-ring statistics, in standard errors.
const SAME_SUPPORT_SE: f64 = 5.0;
/// Relative tolerance of the finite-difference gradient check.
const GRAD_REL_TOL: f64 = 1e-5;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, started: Instant, outcome: Outcome) -> bool {
    let verdict = if outcome.pass { "PASS" } else { "FAIL" };
    println!("{verdict} [{id}] {name} ({:.1}s): {}", started.elapsed().as_secs_f64(), outcome.detail);
    outcome.pass
}

fn criterion_1() -> Outcome {
    let mi = GaussianPairSpec::benchmark().mutual_information().expect("benchmark covariance");
    Outcome { pass: (mi - TRUE_MI).abs() <= MI_TOL, detail: format!("analytic MI {mi:.8} vs {TRUE_MI} ± {MI_TOL}") }
}

fn criterion_2(scores: &[(u64, cnce::estimators::RankedScores)], k: usize, omegas: &[f64]) -> Outcome {
    let r = toy_mi_from_scores(scores, k, omegas).expect("toy estimates");
    let nce = r.nce.mean;
    let cnce: Vec<f64> = r.cnce.iter().map(|(_, e)| e.mean).collect();
    let in_range = nce > NCE_FLOOR && nce < TRUE_MI;
    let below = cnce.iter().all(|c| *c <= nce);
    let monotone = cnce.windows(2).all(|w| w[1] <= w[0]);
    Outcome {
        pass: in_range && below && monotone,
        detail: format!(
            "NCE {nce:.5} in ({NCE_FLOOR}, {TRUE_MI}): {in_range}; CNCE {:?} all <= NCE: {below}, nonincreasing: {monotone}",
            cnce.iter().map(|c| format!("{c:.5}")).collect::<Vec<_>>()
        ),
    }
}

fn criterion_3(ranked: &cnce::estimators::RankedScores, seed: u64, cfg: &ExperimentConfig, k: usize) -> Outcome {
    let trials: usize = cfg.get("bias.trials").unwrap();
    let anchors: usize = cfg.get("bias.anchors").unwrap();
    let spec = RingSpec::new(cfg.get("ring.omega_lower").unwrap(), cfg.get("ring.omega_upper").unwrap()).unwrap();
    let r = bias_variance_from_scores(ranked, seed, k, spec, trials, anchors).expect("bias-variance");
    let var_ok = r.q.variance < r.p.variance;
    let bias_ok = r.q.bias.abs() >= r.p.bias.abs();
    let m = bias_variance_from_scores(ranked, seed, k, RingSpec::marginal(), trials, anchors).expect("marginal ring");
    let mean_gap = (m.p.mean - m.q.mean).abs() / m.p.se_mean.hypot(m.q.se_mean);
    let var_gap = (m.p.variance - m.q.variance).abs() / m.p.se_variance.hypot(m.q.se_variance);
    let same = mean_gap <= SAME_SUPPORT_SE && var_gap <= SAME_SUPPORT_SE;
    Outcome {
        pass: var_ok && bias_ok && same,
        detail: format!(
            "ω=({}, {}) var_q {:.3e} < var_p {:.3e}: {var_ok}; |bias_q| {:.5} >= |bias_p| {:.5}: {bias_ok}; \
             ω=(0,1) gaps {mean_gap:.2} SE (mean), {var_gap:.2} SE (var) <= {SAME_SUPPORT_SE}: {same}; {trials} trials",
            spec.lower(),
            spec.upper(),
            r.q.variance,
            r.p.variance,
            r.q.bias.abs(),
            r.p.bias.abs()
        ),
    }
}

fn criterion_4(scores: &[(u64, cnce::estimators::RankedScores)], k: usize, fractions: &[f64]) -> Outcome {
    let r = counterexample_from_scores(scores, k, fractions).expect("counterexample");
    let smallest = r
        .rows
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(e, rec)| (*e, rec.per_seed.clone()))
        .expect("fractions");
    let every_seed = smallest.1.iter().all(|v| *v > r.true_mi);
    let mut sorted = r.rows.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = sorted.windows(2).all(|w| w[1].1.mean < w[0].1.mean);
    Outcome {
        pass: every_seed && monotone && smallest.0 == 0.05 && k == 100,
        detail: format!(
            "ε={} per-seed {:?} all > {:.5}: {every_seed}; means by ε {:?} strictly decreasing: {monotone}",
            smallest.0,
            smallest.1.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            r.true_mi,
            sorted.iter().map(|(e, rec)| format!("{e}:{:.4}", rec.mean)).collect::<Vec<_>>()
        ),
    }
}

fn criterion_5() -> Outcome {
    let cfg = ExperimentConfig::defaults(Command::Instdisc);
    let settings = InstdiscSettings::from_config(&cfg).unwrap();
    let variants: Vec<Variant> = cfg.list("instdisc.variants").unwrap();
    let r = instdisc(&settings, &variants).expect("instdisc runs");
    let ir = r.final_mean(Variant::Off).unwrap();
    let annealed = r.final_mean(Variant::Annealed).unwrap();
    let no_anneal = r.final_mean(Variant::NoAnneal).unwrap();
    let lesion = annealed >= ir && annealed >= no_anneal;

    let pcfg = ExperimentConfig::defaults(Command::PhaseStudy);
    let psettings = InstdiscSettings::from_config(&pcfg).unwrap();
    let branches: Vec<usize> = pcfg.list("phase.branch_epochs").unwrap();
    let omegas: Vec<f64> = pcfg.list("phase.omegas").unwrap();
    let p = phase_study(&psettings, &branches, &omegas).expect("phase study");
    let early = p.hardest_is_worst(0);
    let late = !p.hardest_is_worst(branches.len() - 1);
    let fmt = |row: &[f64]| row.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>();
    Outcome {
        pass: r.seeds.len() >= 5 && lesion && early && late,
        detail: format!(
            "{} seeds, raw 1-NN {:.4}; IR {ir:.4}, annealed {annealed:.4}, no-anneal {no_anneal:.4}: {lesion}; \
             phase ω {omegas:?} branch {} {:?} hardest worst: {early}, branch {} {:?} hardest not worst: {late}",
            r.seeds.len(),
            r.raw_knn.mean,
            branches[0],
            fmt(&p.mean[0]),
            branches[branches.len() - 1],
            fmt(&p.mean[branches.len() - 1]),
        ),
    }
}

fn gradient_check() -> (bool, f64) {
    let mut worst: f64 = 0.0;
    for seed in 0..4 {
        let mut rng = Rng::new(seed);
        let mlp = Mlp::new(&[3, 5, 4], &mut rng).unwrap();
        let x: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
        let pos = rng.unit_vector(4);
        let negs: Vec<Vec<f64>> = (0..5).map(|_| rng.unit_vector(4)).collect();
        let neg_refs: Vec<&[f64]> = negs.iter().map(Vec::as_slice).collect();
        let (_, grad) = loss_and_grad(&mlp, &x, &pos, &neg_refs, 0.5).unwrap();
        let h = 1e-6;
        for p in 0..mlp.params().len() {
            let eval = |delta: f64| {
                let mut m = mlp.clone();
                m.params_mut()[p] += delta;
                loss_and_grad(&m, &x, &pos, &neg_refs, 0.5).unwrap().0
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            worst = worst.max((fd - grad[p]).abs() / grad[p].abs().max(fd.abs()).max(1e-3));
        }
    }
    (worst <= GRAD_REL_TOL, worst)
}

fn ring_identities() -> bool {
    let mut rng = Rng::new(11);
    let rows: Vec<Vec<f64>> = (0..37).map(|_| rng.unit_vector(4)).collect();
    let store = Matrix::from_rows(&rows).unwrap();
    let anchor = rng.unit_vector(4);
    let m = 36;
    let sizes_ok = [(0.0, 1.0), (0.25, 0.75), (0.5, 1.0), (0.1, 0.3), (0.9, 0.95)].iter().all(|&(lo, hi)| {
        let got = ring_select(&anchor, &store, &RingSpec::new(lo, hi).unwrap(), 0.1, Some(3)).unwrap();
        got.len() == (hi * m as f64).floor() as usize - (lo * m as f64).floor() as usize && !got.contains(&3)
    });
    let mut all = ring_select(&anchor, &store, &RingSpec::marginal(), 0.1, Some(3)).unwrap();
    all.sort_unstable();
    sizes_ok && all == (0..37).filter(|&j| j != 3).collect::<Vec<_>>()
}

fn fifo_order() -> bool {
    let mut q = FifoQueue::new(3, 2).unwrap();
    let items: Vec<Vec<f64>> = (0..5).map(|i| Rng::new(i).unit_vector(2)).collect();
    let evicted: Vec<Option<Vec<f64>>> = items.iter().map(|v| q.enqueue(v).unwrap()).collect();
    let contents: Vec<Vec<f64>> = q.iter().map(<[f64]>::to_vec).collect();
    contents == items[2..].to_vec()
        && evicted[..3].iter().all(Option::is_none)
        && evicted[3].as_deref() == Some(items[0].as_slice())
        && evicted[4].as_deref() == Some(items[1].as_slice())
}

fn kmeans_monotone() -> bool {
    (0..5).all(|seed| {
        let mut rng = Rng::new(seed);
        let rows: Vec<Vec<f64>> = (0..60).map(|_| (0..3).map(|_| rng.normal()).collect()).collect();
        let points = Matrix::from_rows(&rows).unwrap();
        let mut centroids = Matrix::from_rows(&rows[..4]).unwrap();
        let mut prev = f64::INFINITY;
        (0..10).all(|_| {
            let (labels, next) = lloyd_step(&points, &centroids);
            let ss = within_cluster_ss(&points, &next, &labels);
            centroids = next;
            let ok = ss <= prev + 1e-12;
            prev = ss;
            ok
        })
    })
}

fn logsumexp_shift() -> bool {
    let mut rng = Rng::new(5);
    (0..50).all(|_| {
        let v: Vec<f64> = (0..8).map(|_| 10.0 * rng.normal()).collect();
        let c = 1000.0 * rng.normal();
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let a = logsumexp(&v).unwrap() + c;
        let b = logsumexp(&shifted).unwrap();
        (a - b).abs() <= 1e-12 * a.abs().max(1.0)
    })
}

/// Small configs for each command, keeping the rerun check fast.
fn tiny_config(command: Command) -> ExperimentConfig {
    let text = match command {
        Command::ToyMi | Command::Counterexample => {
            "run.seeds = 2\ntoy.points = 120\ntoy.k = 20\ncritic.epochs = 2\ncritic.batch = 32\n"
        }
        Command::BiasVar => "toy.points = 120\ntoy.k = 20\ncritic.epochs = 2\ncritic.batch = 32\nbias.trials = 100\nbias.anchors = 10\n",
        Command::Instdisc => {
            "run.seeds = 2\ndata.per_class = 10\ntrain.epochs = 3\ntrain.k = 8\ntrain.batch = 16\nmodel.hidden = 8\n\
             model.out_dim = 4\nschedule.horizon = 2\nschedule.end = 0.5\nschedule.omega_max = 0.5\n\
             instdisc.variants = off,annealed,no_anneal,marginal\n"
        }
        Command::PhaseStudy => {
            "run.seeds = 2\ndata.per_class = 10\ntrain.epochs = 4\ntrain.k = 8\ntrain.batch = 16\nmodel.hidden = 8\n\
             model.out_dim = 4\nphase.branch_epochs = 0,2\n"
        }
    };
    ExperimentConfig::parse(command, text).unwrap()
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().display().to_string(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn cli_determinism() -> (bool, Vec<String>) {
    let root = tempfile::tempdir().unwrap();
    let mut failures = Vec::new();
    for command in Command::ALL {
        let cfg = tiny_config(command);
        let a = cli::run(&cfg, &root.path().join("a")).unwrap();
        let b = cli::run(&cfg, &root.path().join("b")).unwrap();
        let (ta, tb) = (read_tree(&a), read_tree(&b));
        if ta.is_empty() || ta != tb {
            failures.push(command.name().to_string());
        }
    }
    (failures.is_empty(), failures)
}

fn criterion_6() -> Outcome {
    let (grad_ok, grad_err) = gradient_check();
    let ring_ok = ring_identities();
    let fifo_ok = fifo_order();
    let kmeans_ok = kmeans_monotone();
    let lse_ok = logsumexp_shift();
    let (cli_ok, cli_fail) = cli_determinism();
    Outcome {
        pass: grad_ok && ring_ok && fifo_ok && kmeans_ok && lse_ok && cli_ok,
        detail: format!(
            "gradient max rel err {grad_err:.2e} <= {GRAD_REL_TOL}: {grad_ok}; ring identities: {ring_ok}; \
             FIFO order: {fifo_ok}; k-means monotone: {kmeans_ok}; logsumexp shift: {lse_ok}; \
             CLI reruns bitwise identical: {cli_ok}{}",
            if cli_fail.is_empty() { String::new() } else { format!(" (differs: {})", cli_fail.join(", ")) }
        ),
    }
}

fn main() {
    let mut all = true;

    let t = Instant::now();
    all &= report(1, "analytic mutual information", t, criterion_1());

    let t = Instant::now();
    let toy_cfg = ExperimentConfig::defaults(Command::ToyMi);
    let toy = ToySettings::from_config(&toy_cfg).unwrap();
    let seeds: Vec<u64> = (0..toy_cfg.get::<u64>("run.seeds").unwrap()).collect();
    let scores = toy_scores(&toy, &seeds).expect("toy critics train");
    let omegas: Vec<f64> = toy_cfg.list("toy_mi.omegas").unwrap();
    all &= report(2, "bound ordering on the toy benchmark", t, criterion_2(&scores, toy.k, &omegas));

    let t = Instant::now();
    let bv_cfg = ExperimentConfig::defaults(Command::BiasVar);
    let bv_seed: u64 = bv_cfg.get("run.seed").unwrap();
    let ranked = &scores.iter().find(|(s, _)| *s == bv_seed).expect("bias-var seed is a toy seed").1;
    all &= report(3, "bias/variance tradeoff", t, criterion_3(ranked, bv_seed, &bv_cfg, toy.k));

    let t = Instant::now();
    let ce_cfg = ExperimentConfig::defaults(Command::Counterexample);
    let fractions: Vec<f64> = ce_cfg.list("counterexample.fractions").unwrap();
    all &= report(4, "unrestricted proposal counterexample", t, criterion_4(&scores, toy.k, &fractions));

    let t = Instant::now();
    all &= report(5, "lesion orderings and hardness phases", t, criterion_5());

    let t = Instant::now();
    all &= report(6, "property suites", t, criterion_6());

    if !all {
        std::process::exit(1);
    }
}
