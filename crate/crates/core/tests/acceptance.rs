//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::time::Instant;

use delaypred_core::backstepping::{lyapunov_bar, nominal_predictor_feedback, verify_decay, BacksteppingCertificate};
use delaypred_core::fixtures::{random_stabilized_plant, StabilizedPlant};
use delaypred_core::model::{ExtendedState, LinearPlant, ScalarExamplePlant};
use delaypred_core::optimize::golden_section_min;
use delaypred_core::redesign::{
    certify_with, minimax_input, scalar_certify, scalar_q_search, CertificationOptions, RedesignSetup, Region,
    ScalarLaw, SigmaChoice,
};
use delaypred_core::robustness::{constant_solution_check, sufficient_bound, table1};
use delaypred_core::sampling::{default_decay_samples, rng_from_seed, split_seed};
use delaypred_core::simulation::{adversary_endpoint_check, simulate, DisturbanceStrategy, Monitor};
use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

const PUBLISHED: [(usize, f64); 11] = [
    (2, 0.3311),
    (3, 0.2451),
    (4, 0.1923),
    (5, 0.1573),
    (6, 0.1326),
    (7, 0.1144),
    (8, 0.1005),
    (9, 0.0896),
    (10, 0.0807),
    (15, 0.0539),
    (20, 0.0404),
];

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let rows = match table1() {
        Ok(rows) => rows,
        Err(e) => return outcome(false, format!("table1 failed: {e}")),
    };
    let elapsed = start.elapsed().as_secs_f64();
    let mut pass = elapsed < 10.0;
    let mut notes = Vec::new();
    for row in &rows {
        if row.necessary != 1.0 / (row.r as f64 + 1.0) {
            pass = false;
            notes.push(format!("r={} necessary {}", row.r, row.necessary));
        }
    }
    for (r, published) in PUBLISHED {
        let row = rows.iter().find(|b| b.r == r).expect("row present");
        let dev = row.sufficient - published;
        if dev.abs() > 5e-4 {
            pass = false;
            notes.push(format!("r={r} sufficient {:.6} vs {published} (off by {dev:+.6})", row.sufficient));
        }
    }
    let detail = if notes.is_empty() {
        format!("all rows within 5e-4, {elapsed:.3}s")
    } else {
        format!("{}; {elapsed:.3}s", notes.join("; "))
    };
    outcome(pass, detail)
}

fn criterion_2() -> Outcome {
    let b = sufficient_bound(1).expect("r = 1");
    let q = b.s_star.expect("s_star") + 1.0;
    let pass = (b.sufficient - 0.5).abs() <= 1e-6 && (q - 2.0).abs() <= 1e-4;
    outcome(pass, format!("sufficient {:.9} at q {:.7}", b.sufficient, q))
}

fn criterion_3() -> Outcome {
    let cert = scalar_certify(0.535, 1.81, 100_000).expect("valid arguments");
    let redesign = scalar_q_search(ScalarLaw::Redesign, 100_000).expect("search");
    let nominal = scalar_q_search(ScalarLaw::Nominal, 100_000).expect("search");
    let pass = cert.pass && cert.worst_margin < 0.0 && redesign.a >= 0.535 && (nominal.a - 0.5).abs() <= 0.005;
    outcome(
        pass,
        format!(
            "a=0.535 q=1.81 worst {:.3e}; redesign best a {:.6} at q {:.4}; nominal best a {:.6} at q {:.4}",
            cert.worst_margin, redesign.a, redesign.q, nominal.a, nominal.q
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for r in [1, 2, 5, 10] {
        for x0 in [1.0, -3.0, 0.25] {
            let dev = constant_solution_check(r, x0, 200).expect("valid arguments");
            worst = worst.max(dev / x0.abs());
            pass &= dev <= 1e-9 * x0.abs();
        }
    }
    outcome(pass, format!("max relative deviation {worst:.3e}"))
}

fn random_plants(count: u64, bound: f64) -> Vec<StabilizedPlant> {
    (0..count).map(|i| random_stabilized_plant(split_seed(0xACCE55, i), 4, 6, bound).expect("plant")).collect()
}

fn criterion_5() -> Outcome {
    let mut worst: f64 = 0.0;
    for sp in random_plants(20, 0.0) {
        let r = sp.plant.delay();
        let mut rng = rng_from_seed(sp.plant.dim() as u64 * 31 + r as u64);
        let w: Vec<f64> = (0..sp.plant.dim() + r).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z0 = ExtendedState::from_flat(&w, sp.plant.dim());
        let traj = simulate(
            &sp.plant,
            |z| nominal_predictor_feedback(&sp.plant, &sp.stab, z),
            DisturbanceStrategy::Zero,
            &z0,
            100 + r,
            Monitor::none(),
        )
        .expect("simulation");
        for t in 0..=100 {
            let u = traj.records[t].u;
            let x_ahead = DVector::from_column_slice(&traj.records[t + r].x);
            let target = sp.stab.k().dot(&x_ahead);
            worst = worst.max((u - target).abs() / target.abs().max(1.0));
        }
    }
    outcome(worst <= 1e-10, format!("max |u(t) - k'x(t+r)| {worst:.3e} over 20 plants"))
}

fn criterion_6() -> Outcome {
    let mut worst_gap = f64::NEG_INFINITY;
    for sp in random_plants(20, 0.0) {
        let lambda = sp.stab.lambda();
        let cert = BacksteppingCertificate::new(2.0 / (1.0 - lambda), 1.0, 0.5, lambda).expect("certificate");
        let samples = default_decay_samples(sp.plant.dim(), sp.plant.delay(), 10_000);
        let ratio = verify_decay(&sp.plant, &sp.stab, &cert, &samples).expect("decay");
        worst_gap = worst_gap.max(ratio - cert.decay_bound());
    }
    outcome(worst_gap <= 1e-9, format!("max ratio - (lambda + 1/c) = {worst_gap:.3e}"))
}

/// `min_u max_d Vbar(next)` by brute force: `d` on a grid containing both endpoints, `u` by a
/// coarse grid followed by golden section (the max over `d` is convex in `u`).
fn brute_force_minimax(s: &RedesignSetup, z: &ExtendedState, a: f64) -> f64 {
    let wide = s.plant().with_bound(a).unwrap();
    let inner = |u: f64| {
        (0..=20)
            .map(|i| -a + 2.0 * a * i as f64 / 20.0)
            .map(|d| {
                let next = wide.step_extended(z, u, d).unwrap();
                lyapunov_bar(s.plant(), s.stabilizer(), s.certificate(), &next).unwrap()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    // Bracket around the nominal input by doubling until both ends rise above the center.
    let center = nominal_predictor_feedback(s.plant(), s.stabilizer(), z);
    let f0 = inner(center);
    let mut span = z.norm().max(center.abs()).max(1e-300);
    while inner(center - span) <= f0 || inner(center + span) <= f0 {
        span *= 2.0;
        assert!(span.is_finite(), "no bracket");
    }
    let grid: Vec<f64> = (0..=80).map(|i| center - span + 2.0 * span * i as f64 / 80.0).collect();
    let best = (0..grid.len()).min_by(|&i, &j| inner(grid[i]).total_cmp(&inner(grid[j]))).unwrap();
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    golden_section_min(inner, lo, hi, 1e-12 * span).unwrap().1
}

fn criterion_7() -> Outcome {
    let plants = random_plants(100, 0.0);
    let results: Vec<(f64, bool, bool)> = plants
        .par_iter()
        .enumerate()
        .flat_map_iter(|(pi, sp)| {
            let mut rng = rng_from_seed(split_seed(0x7777, pi as u64));
            let n = sp.plant.dim();
            let r = sp.plant.delay().max(1);
            let a: f64 = rng.random_range(0.0..0.8);
            let plant = LinearPlant::new(sp.plant.a().clone(), sp.plant.b().clone(), sp.plant.g().clone(), a, r)
                .expect("plant");
            let c = rng.random_range(0.5..3.0);
            let phi = rng.random_range(0.05..2.0);
            let sigma = rng.random_range(0.0..1.0);
            let cert = BacksteppingCertificate::relaxed(c, phi, sigma, sp.stab.lambda()).unwrap();
            let s = RedesignSetup::new(plant, sp.stab.clone(), cert).expect("setup");
            (0..100)
                .map(|_| {
                    let w: Vec<f64> = (0..n + r).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let z = ExtendedState::from_flat(&w, n);
                    let k = s.redesigned_feedback(&z, a).unwrap();
                    let value = s.worst_case_value(&z, k, a).unwrap();
                    let brute = brute_force_minimax(&s, &z, a);
                    let rel = (value - brute).abs() / value.abs().max(brute.abs()).max(1e-300);
                    (rel, value <= brute * (1.0 + 1e-12) + 1e-300, adversary_endpoint_check(&s, &z, k))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let worst_rel = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let never_above = results.iter().all(|r| r.1);
    let endpoints = results.iter().all(|r| r.2);
    outcome(
        worst_rel <= 1e-6 && endpoints,
        format!(
            "{} pairs, max relative gap {worst_rel:.3e}, K never worse than brute force: {never_above}, endpoint maxima: {endpoints}",
            results.len()
        ),
    )
}

struct Scenario {
    name: &'static str,
    setup: RedesignSetup,
    a: f64,
}

fn scenarios() -> Vec<Scenario> {
    let mut out = Vec::new();
    let scalar = |r: usize, a: f64, c: f64, phi: f64| {
        let ex = ScalarExamplePlant::deadbeat(a, r).unwrap();
        let cert = BacksteppingCertificate::relaxed(c, phi, 0.0, 0.0).unwrap();
        RedesignSetup::new(ex.plant(), ex.stabilizer(), cert).unwrap()
    };
    out.push(Scenario { name: "scalar r=1 q=1.62 a=0.6", setup: scalar(1, 0.6, 1.62, 0.0), a: 0.6 });
    out.push(Scenario { name: "scalar r=1 q=1.81 a=0.535", setup: scalar(1, 0.535, 1.81, 0.0), a: 0.535 });
    out.push(Scenario { name: "scalar r=2 c=2 phi=0.5 a=0.3", setup: scalar(2, 0.3, 2.0, 0.5), a: 0.3 });
    out.push(Scenario { name: "scalar r=4 c=1.5 phi=1 a=0.15", setup: scalar(4, 0.15, 1.5, 1.0), a: 0.15 });
    for (i, sp) in random_plants(6, 0.0).into_iter().enumerate() {
        let r = sp.plant.delay().max(1);
        let a = 0.02;
        let plant =
            LinearPlant::new(sp.plant.a().clone(), sp.plant.b().clone(), sp.plant.g().clone() * 0.5, a, r).unwrap();
        let lambda = sp.stab.lambda();
        let cert = BacksteppingCertificate::new(2.0 / (1.0 - lambda), 1.0, 0.0, lambda).unwrap();
        let setup = RedesignSetup::new(plant, sp.stab, cert).unwrap();
        let name: &'static str = Box::leak(format!("random plant #{i} a={a}").into_boxed_str());
        out.push(Scenario { name, setup, a });
    }
    out
}

fn criterion_8() -> Outcome {
    let opts = CertificationOptions { n_samples: 4096, sigma: SigmaChoice::Auto, ..Default::default() };
    let mut certified = 0;
    let mut violations = 0usize;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut notes = Vec::new();
    for sc in scenarios() {
        let rep = certify_with(&sc.setup, sc.a, &opts).expect("certify");
        if !rep.pass {
            notes.push(format!("{} not certified", sc.name));
            continue;
        }
        certified += 1;
        let setup = sc.setup.with_certificate(sc.setup.certificate().with_sigma(rep.sigma).unwrap()).unwrap();
        let n = setup.plant().dim();
        let r = setup.plant().delay();
        let runs: Vec<(usize, f64)> = (0..100u64)
            .into_par_iter()
            .map(|i| {
                let seed = split_seed(0x5151, i);
                let mut rng = rng_from_seed(seed);
                let w: Vec<f64> = (0..n + r).map(|_| rng.random_range(-1.0..1.0)).collect();
                let z0 = ExtendedState::from_flat(&w, n);
                let strategy = match i % 5 {
                    0 => DisturbanceStrategy::UniformRandom { seed },
                    1 => DisturbanceStrategy::Constant(sc.a),
                    2 => DisturbanceStrategy::Constant(-sc.a),
                    _ => DisturbanceStrategy::GreedyAdversary,
                };
                let traj = simulate(
                    setup.plant(),
                    |z| setup.redesigned_feedback(z, sc.a).unwrap(),
                    strategy,
                    &z0,
                    200,
                    Monitor::redesign(&setup),
                )
                .unwrap();
                let mut bad = 0;
                let mut excess = f64::NEG_INFINITY;
                for pair in traj.records.windows(2) {
                    let (v0, v1) = (pair[0].vbar.unwrap(), pair[1].vbar.unwrap());
                    if v0 > 0.0 {
                        excess = excess.max(v1 / v0 - rep.sigma);
                    }
                    if v1 > (rep.sigma + 1e-9) * v0 {
                        bad += 1;
                    }
                }
                (bad, excess)
            })
            .collect();
        let bad: usize = runs.iter().map(|r| r.0).sum();
        let excess = runs.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
        worst_excess = worst_excess.max(excess);
        violations += bad;
        if bad > 0 {
            notes.push(format!("{}: {bad} violating steps at sigma {}", sc.name, rep.sigma));
        }
    }
    let mut detail = format!(
        "{certified} certified scenarios x 100 runs, {violations} violating steps, max ratio - sigma {worst_excess:.3e}"
    );
    if !notes.is_empty() {
        detail.push_str(&format!(" ({})", notes.join("; ")));
    }
    outcome(certified > 0 && violations == 0, detail)
}

fn criterion_9() -> Outcome {
    let mut failures = Vec::new();
    let mut rng = rng_from_seed(0x9999);
    for pi in 0..50u64 {
        let sp = random_stabilized_plant(split_seed(0x99, pi), 4, 6, 0.0).unwrap();
        let n = sp.plant.dim();
        let r = sp.plant.delay().max(1);
        let a: f64 = rng.random_range(0.0..0.5);
        let plant =
            LinearPlant::new(sp.plant.a().clone(), sp.plant.b().clone(), sp.plant.g().clone(), a, r).unwrap();
        let cert = BacksteppingCertificate::relaxed(rng.random_range(0.5..3.0), rng.random_range(0.1..2.0), 0.5, sp.stab.lambda())
            .unwrap();
        let s = RedesignSetup::new(plant.clone(), sp.stab.clone(), cert).unwrap();
        if s.redesigned_feedback(&ExtendedState::zeros(n, r), a).unwrap() != 0.0 {
            failures.push("K(0) != 0".to_string());
        }
        for _ in 0..40 {
            let w: Vec<f64> = (0..n + r).map(|_| rng.random_range(-1.0..1.0)).collect();
            let z = ExtendedState::from_flat(&w, n);
            let k = s.redesigned_feedback(&z, a).unwrap();
            for tau in [1e-3, 1.0, 1e3] {
                let kt = s.redesigned_feedback(&z.scaled(tau), a).unwrap();
                if (kt - tau * k).abs() > 1e-9 * (tau * k).abs().max(tau) {
                    failures.push(format!("homogeneity at tau {tau}"));
                }
            }
            // Boundary: pick the a at which z sits on |p kappa - b L| = a L^2.
            let (p, l, kappa, b) = (s.p(), s.eval_l(&z.x), s.eval_kappa(&z), s.eval_b(&z));
            if l.abs() > 1e-6 {
                let disc = p * kappa - b * l;
                let ab = disc.abs() / (l * l);
                let interior = -kappa / l;
                let outer = if disc >= 0.0 { -(ab * l + b) / p } else { (ab * l - b) / p };
                let (u, _) = minimax_input(p, l, kappa, b, ab);
                let scale = interior.abs().max(outer.abs()).max(1e-300);
                if (interior - outer).abs() > 1e-9 * scale || (u - outer).abs() > 1e-9 * scale {
                    failures.push("branch continuity".into());
                }
                let (_, region) = minimax_input(p, l, kappa, b, ab * 0.5);
                if region == Region::Interior {
                    failures.push("region routing".into());
                }
            }
            // Delayed FIFO form against the extended form.
            let mut ze = z.clone();
            let mut x = z.x.clone();
            let mut buf: std::collections::VecDeque<f64> = z.y.iter().copied().collect();
            for _ in 0..30 {
                let u = rng.random_range(-1.0..1.0);
                let d = rng.random_range(-a..=a);
                ze = plant.step_extended(&ze, u, d).unwrap();
                let (xn, bn) = plant.step_delayed(&x, &buf, u, d).unwrap();
                x = xn;
                buf = bn;
                if (&ze.x - &x).amax() > 1e-12 * x.amax().max(1.0) || ze.y.iter().ne(buf.iter()) {
                    failures.push("representation equivalence".into());
                }
            }
        }
        let z0 = ExtendedState::from_flat(&(0..n + r).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>(), n);
        let run = || {
            simulate(
                &plant,
                |z| s.redesigned_feedback(z, a).unwrap(),
                DisturbanceStrategy::UniformRandom { seed: pi },
                &z0,
                50,
                Monitor::redesign(&s),
            )
            .unwrap()
        };
        if run() != run() {
            failures.push("replay determinism".into());
        }
    }
    failures.dedup();
    let pass = failures.is_empty();
    outcome(
        pass,
        if pass {
            "homogeneity, branch continuity, representation equivalence, K(0)=0, replay: all hold on 50 plants x 40 states".to_string()
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("Robustness table", criterion_1),
        ("r=1 analytic case", criterion_2),
        ("Scalar example certification", criterion_3),
        ("Constant-solution counterexample", criterion_4),
        ("Predictor identity", criterion_5),
        ("Backstepping decay", criterion_6),
        ("Minimax correctness oracle", criterion_7),
        ("Certified-sigma simulation", criterion_8),
        ("Structural properties", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let res = run();
        let status = if res.pass { "PASS" } else { "FAIL" };
        println!("criterion {} [{status}] {name}: {} ({:.2}s)", i + 1, res.detail, start.elapsed().as_secs_f64());
        if !res.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
