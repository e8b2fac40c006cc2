//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary so every criterion reports even when an earlier
//! one fails. Set `ACCEPTANCE_STRICT=1` to turn any FAIL into a nonzero exit.
//! `ACCEPTANCE_ONLY=3,5` runs a subset.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qudit_learn::data::{load_iris, Split};
use qudit_learn::experiment::{
    bloch_vector, run_experiment, ExperimentConfig, ResultRecord, RunContext,
};
use qudit_learn::metric::{implicit_loss, ClassEnsemble, Method, Objective, ReferenceSet};
use qudit_learn::mos::{evolve, gram_matrix, mos_energy, GAConfig};
use qudit_learn::noise::{
    evolve_schedule, random_rotations, DensityMatrix, NoiseModel, PulseSchedule,
};
use qudit_learn::qudit::{prepare, AnsatzParams, Encoding, EncodingSpec, PureState};

const IRIS_PINNED_ACCURACY: f64 = 115.0 / 120.0;
const IRIS_PINNED_TOL: f64 = 1e-4;
const IRIS_PINNED_FRACTION: f64 = 0.95;
const RESTARTS: usize = 100;
const K2_IDENTITY_TOL: f64 = 1e-12;
const K2_ENSEMBLES: usize = 1000;
const TRINE_OVERLAP: f64 = 0.25;
const TETRA_OVERLAP: f64 = 1.0 / 3.0;
const MOS_OVERLAP_TOL: f64 = 0.01;
const ORTHO_ENERGY_TOL: f64 = 1e-10;
const NOISELESS_TOL: f64 = 1e-6;
const NOISELESS_SCHEDULES: usize = 100;
const NOISE_LONG_T2: f64 = 100e-6;
const NOISE_MAX_ACCURACY: f64 = 0.96;
const NOISE_CHANCE: f64 = 1.0 / 3.0;
const NOISE_CHANCE_TOL: f64 = 0.08;
const PCA_TRAIN_FIDELITY: f64 = 0.30;
const PCA_TEST_FIDELITY: f64 = 0.20;
const PCA_FIDELITY_TOL: f64 = 0.08;
const PCA_MONOTONE_SLACK: f64 = 0.02;
const GRADIENT_TOL: f64 = 1e-5;
const GRADIENT_POINTS: usize = 50;
const WDBC_MEDIAN: f64 = 0.85;

struct Report {
    failures: usize,
    lines: Vec<String>,
}

impl Report {
    fn record(&mut self, id: usize, pass: bool, what: &str, detail: String, t0: Instant) {
        if !pass {
            self.failures += 1;
        }
        let line = format!(
            "criterion {id}: {} | {what} | {detail} | {:.1}s",
            if pass { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64()
        );
        println!("{line}");
        self.lines.push(line);
    }
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn run(toml: &str) -> ResultRecord {
    let cfg = ExperimentConfig::from_toml(toml).expect("acceptance config parses");
    run_experiment(
        &cfg,
        &RunContext {
            data_dir: data_dir(),
            jobs: None,
        },
    )
    .expect("experiment runs")
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn criterion_1(r: &mut Report) {
    let t0 = Instant::now();
    let rec = run(&format!(
        "kind = \"encoding_sweep\"\n[dataset]\nname = \"iris\"\n[model]\ndims = [3, 4, 5, 6]\n\
         encodings = [\"g1\"]\nmethods = [\"explicit\"]\ncenters = \"orthonormal\"\nrestarts = {RESTARTS}\n"
    ));
    let mut pass = true;
    let mut parts = vec![];
    for g in &rec.groups {
        let hits = rec
            .restarts
            .iter()
            .filter(|x| {
                x.dim == g.dim && (x.test_accuracy - IRIS_PINNED_ACCURACY).abs() <= IRIS_PINNED_TOL
            })
            .count();
        let frac = hits as f64 / RESTARTS as f64;
        pass &= frac >= IRIS_PINNED_FRACTION;
        parts.push(format!(
            "d={} {hits}/{RESTARTS} at 0.9583 (median {:.4})",
            g.dim, g.test_accuracy.median
        ));
    }
    r.record(
        1,
        pass,
        "Iris explicit g1 pinned accuracy",
        format!("{}; need >= {IRIS_PINNED_FRACTION} each", parts.join(", ")),
        t0,
    );
}

fn criterion_2(r: &mut Report) {
    let t0 = Instant::now();
    let rec = run(&format!(
        "kind = \"encoding_sweep\"\n[dataset]\nname = \"iris\"\n[model]\ndims = [2, 3, 4, 5, 6]\n\
         encodings = [\"g1\", \"g2\", \"g3\"]\nmethods = [\"explicit\"]\nrestarts = {RESTARTS}\n"
    ));
    let med = |d: usize, e: Encoding| {
        rec.groups
            .iter()
            .find(|g| g.dim == d && g.encoding == e)
            .map(|g| g.test_accuracy.median)
            .expect("group present")
    };
    let mut pass = true;
    let mut parts = vec![];
    for d in 2..=6 {
        let (g1, g2, g3) = (
            med(d, Encoding::G1),
            med(d, Encoding::G2),
            med(d, Encoding::G3),
        );
        pass &= g2 >= g3;
        parts.push(format!("d={d} g1={g1:.4} g2={g2:.4} g3={g3:.4}"));
    }
    r.record(
        2,
        pass,
        "median(g2) >= median(g3) per d",
        parts.join(", "),
        t0,
    );
}

fn density(members: &[PureState]) -> DMatrix<C64> {
    let d = members[0].dim();
    let mut rho = DMatrix::<C64>::zeros(d, d);
    for s in members {
        let v = nalgebra::DVector::from_column_slice(s.amplitudes());
        rho += &v * v.adjoint();
    }
    rho / C64::new(members.len() as f64, 0.0)
}

fn criterion_3(r: &mut Report) {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..K2_ENSEMBLES {
        let d = rng.gen_range(2..=6);
        let ens: Vec<Vec<PureState>> = (0..2)
            .map(|_| {
                let n = rng.gen_range(1..=8);
                (0..n)
                    .map(|_| PureState::random(d, &mut rng).unwrap())
                    .collect()
            })
            .collect();
        let diff = density(&ens[0]) - density(&ens[1]);
        let oracle = 1.0 - 0.5 * (&diff * &diff).trace().re;
        let groups: Vec<ClassEnsemble> = ens
            .into_iter()
            .enumerate()
            .map(|(k, m)| ClassEnsemble::new(k, m).unwrap())
            .collect();
        worst = worst.max((implicit_loss(&groups).unwrap() - oracle).abs());
    }
    r.record(
        3,
        worst <= K2_IDENTITY_TOL,
        "K=2 implicit loss equals 1 - tr[(rho1-rho2)^2]/2",
        format!("max error {worst:.2e} over {K2_ENSEMBLES} ensembles; tol {K2_IDENTITY_TOL:e}"),
        t0,
    );
}

/// Pairwise squared overlaps from Bloch vectors, `(1 + n_i . n_j) / 2`.
fn bloch_overlaps(states: &[PureState]) -> Vec<f64> {
    let v: Vec<[f64; 3]> = states.iter().map(|s| bloch_vector(s).unwrap()).collect();
    let mut out = vec![];
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            let dot: f64 = (0..3).map(|a| v[i][a] * v[j][a]).sum();
            out.push(0.5 * (1.0 + dot));
        }
    }
    out
}

fn criterion_4(r: &mut Report) {
    let t0 = Instant::now();
    let ga = GAConfig {
        seed: 4,
        ..GAConfig::default()
    };
    let trine = evolve(&ga, 2, 3).unwrap();
    let trine_ov = bloch_overlaps(&trine.states);
    let trine_ok = trine_ov
        .iter()
        .all(|f| (f - TRINE_OVERLAP).abs() <= MOS_OVERLAP_TOL);

    // x^2 is flat over every tight frame for d=2, K=4; x^4 singles out the tetrahedron
    let tetra = evolve(
        &GAConfig {
            exponent: 4.0,
            ..ga.clone()
        },
        2,
        4,
    )
    .unwrap();
    let tetra_ov = bloch_overlaps(&tetra.states);
    let tetra_ok = tetra_ov
        .iter()
        .all(|f| (f - TETRA_OVERLAP).abs() <= MOS_OVERLAP_TOL);
    let flat = evolve(&ga, 2, 4).unwrap();
    let g = gram_matrix(&flat.states);
    let flat_spread = (0..4)
        .flat_map(|i| (i + 1..4).map(move |j| (i, j)))
        .map(|(i, j)| g[(i, j)].powi(2))
        .fold((1.0f64, 0.0f64), |(lo, hi), f| (lo.min(f), hi.max(f)));

    let mut worst_ortho: f64 = 0.0;
    for d in 2..=5 {
        for k in 2..=d {
            let ind = evolve(
                &GAConfig {
                    seed: (10 * d + k) as u64,
                    ..ga.clone()
                },
                d,
                k,
            )
            .unwrap();
            worst_ortho = worst_ortho.max(mos_energy(&ind.states, ga.exponent).unwrap());
        }
    }
    let ortho_ok = worst_ortho < ORTHO_ENERGY_TOL;
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|f| format!("{f:.4}"))
            .collect::<Vec<_>>()
            .join("/")
    };
    r.record(
        4,
        trine_ok && tetra_ok && ortho_ok,
        "MOS oracles",
        format!(
            "trine {} (want 0.25); tetrahedron x^4 {} (want 0.3333); x^2 K=4 overlaps span [{:.3}, {:.3}]; \
             max E_W for K<=d {worst_ortho:.1e} (tol {ORTHO_ENERGY_TOL:e}); tol {MOS_OVERLAP_TOL}",
            fmt(&trine_ov),
            fmt(&tetra_ov),
            flat_spread.0,
            flat_spread.1
        ),
        t0,
    );
}

fn criterion_5(r: &mut Report) {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for d in 2..=4 {
        let model = NoiseModel::noiseless(d).unwrap();
        for _ in 0..NOISELESS_SCHEDULES {
            let len = rng.gen_range(1..=8);
            let rots = random_rotations(d, len, &mut rng);
            let pure = prepare(d, &rots).unwrap();
            let schedule = PulseSchedule::from_rotations(&rots, &model).unwrap();
            let ground = PureState::ground(d).unwrap();
            let rho =
                evolve_schedule(&DensityMatrix::from_pure(&ground), &schedule, &model).unwrap();
            worst = worst.max(rho.max_entry_distance(&DensityMatrix::from_pure(&pure)));
        }
    }
    r.record(
        5,
        worst <= NOISELESS_TOL,
        "noiseless Lindblad matches state vector",
        format!("max entry error {worst:.2e} over {NOISELESS_SCHEDULES} schedules x d=2..4; tol {NOISELESS_TOL:e}"),
        t0,
    );
}

fn criterion_6(r: &mut Report) {
    let t0 = Instant::now();
    let rabi = qudit_learn::noise::EXPERIMENTAL_RABI;
    let unit_t2 = 1.0 / rabi;
    let rec = run(&format!(
        "kind = \"noise_sweep\"\n[dataset]\nname = \"iris\"\n[model]\ndims = [2]\nencodings = [\"g2\"]\n\
         [noise]\nt2 = [{NOISE_LONG_T2:e}, {unit_t2:e}]\nruns = 50\n"
    ));
    let long = &rec.noise[0];
    let unit = &rec.noise[1];
    let pass = long.test_accuracy.max >= NOISE_MAX_ACCURACY
        && (unit.test_accuracy.median - NOISE_CHANCE).abs() <= NOISE_CHANCE_TOL;
    r.record(
        6,
        pass,
        "noise study endpoints",
        format!(
            "T2=100us max {:.4} (need >= {NOISE_MAX_ACCURACY}); Omega*T2={:.2} median {:.4} (want 1/3 +- {NOISE_CHANCE_TOL}), max {:.4}",
            long.test_accuracy.max, unit.rabi_t2, unit.test_accuracy.median, unit.test_accuracy.max
        ),
        t0,
    );
}

fn criterion_7(r: &mut Report) {
    let t0 = Instant::now();
    let rec = run(
        "kind = \"pca_sweep\"\n[dataset]\nname = \"digits\"\ndigits = [0, 1, 2, 3, 4]\n[model]\ndims = [3]\n\
         encodings = [\"g2\"]\nmethods = [\"explicit\"]\nrestarts = 10\n[pca]\ndims = [4, 6, 8, 10, 12]\n",
    );
    let fid: Vec<(usize, f64, f64, f64)> = rec
        .groups
        .iter()
        .map(|g| {
            (
                g.pca_dim.unwrap(),
                g.train_fidelity.as_ref().unwrap().median,
                g.test_fidelity.as_ref().unwrap().median,
                g.test_accuracy.median,
            )
        })
        .collect();
    let (_, tr4, te4, _) = fid[0];
    let monotone = fid
        .windows(2)
        .all(|w| w[1].1 >= w[0].1 - PCA_MONOTONE_SLACK);
    let pass = (tr4 - PCA_TRAIN_FIDELITY).abs() <= PCA_FIDELITY_TOL
        && (te4 - PCA_TEST_FIDELITY).abs() <= PCA_FIDELITY_TOL
        && monotone;
    let table = fid
        .iter()
        .map(|(k, a, b, c)| format!("pca={k} fid {a:.3}/{b:.3} acc {c:.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    r.record(
        7,
        pass,
        "digits PCA fidelity",
        format!(
            "{table}; want pca=4 train {PCA_TRAIN_FIDELITY} test {PCA_TEST_FIDELITY} +- {PCA_FIDELITY_TOL}, \
             non-decreasing train fidelity (slack {PCA_MONOTONE_SLACK}): {monotone}"
        ),
        t0,
    );
}

/// Five-point stencil at a step smaller than the trainer's.
fn stencil_gradient(obj: &Objective<'_>, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let mut at = |s: f64| {
                p[i] = x[i] + s;
                let v = obj.loss(&p).unwrap();
                p[i] = x[i];
                v
            };
            (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h)
        })
        .collect()
}

fn criterion_8(r: &mut Report) {
    let t0 = Instant::now();
    let ds = load_iris(&data_dir().join("iris.csv"), 8)
        .unwrap()
        .standardized()
        .unwrap();
    let train = ds.samples(Split::Train);
    let spec = EncodingSpec::new(Encoding::G2, 3, 4, 2).unwrap();
    let refs = ReferenceSet::orthonormal(3, 3).unwrap();
    let h = qudit_learn::optim::AdamConfig::default().fd_step;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for method in [Method::Explicit, Method::Implicit] {
        let obj = Objective::new(&train, &spec, method, Some(&refs), None).unwrap();
        for _ in 0..GRADIENT_POINTS {
            let x = AnsatzParams::random(&spec, &mut rng).values;
            let g = obj.gradient(&x, h);
            let o = stencil_gradient(&obj, &x, h / 10.0);
            let num: f64 = g
                .iter()
                .zip(&o)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let den: f64 = o.iter().map(|b| b * b).sum::<f64>().sqrt().max(1e-12);
            worst = worst.max(num / den);
        }
    }
    r.record(
        8,
        worst <= GRADIENT_TOL,
        "finite-difference gradients vs five-point oracle",
        format!("max relative error {worst:.2e} over {GRADIENT_POINTS} points per loss; tol {GRADIENT_TOL:e}"),
        t0,
    );
}

fn criterion_9(r: &mut Report) {
    let t0 = Instant::now();
    let rec = run(&format!(
        "kind = \"method_compare\"\n[dataset]\nname = \"breast_cancer\"\n[model]\ndims = [2, 3, 4, 5, 6]\n\
         methods = [\"explicit\", \"implicit\"]\nrestarts = {RESTARTS}\n"
    ));
    let mut pass = true;
    let mut parts = vec![];
    for g in &rec.groups {
        let mut acc: Vec<f64> = rec
            .restarts
            .iter()
            .filter(|x| x.dim == g.dim && x.method == g.method)
            .map(|x| x.test_accuracy)
            .collect();
        let m = median(&mut acc);
        pass &= m >= WDBC_MEDIAN;
        parts.push(format!("d={} {}={m:.4}", g.dim, g.method));
    }
    r.record(
        9,
        pass,
        "WDBC median test accuracy",
        format!("{}; need >= {WDBC_MEDIAN}", parts.join(", ")),
        t0,
    );
}

fn main() {
    // cargo passes harness flags such as --nocapture or filters; they do not apply here
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [(usize, fn(&mut Report)); 9] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];
    let mut report = Report {
        failures: 0,
        lines: vec![],
    };
    for (id, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        f(&mut report);
    }
    println!(
        "acceptance: {} criteria, {} failed",
        report.lines.len(),
        report.failures
    );
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && report.failures > 0 {
        std::process::exit(1);
    }
}
