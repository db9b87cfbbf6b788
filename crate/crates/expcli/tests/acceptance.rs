//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//! Runs without the libtest harness so the lines reach the terminal.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tt_gauss::cross::{cross_approximate, CrossConfig};
use tt_gauss::filtering::{ekf_update, EkfState, ObservationModel, PendulumSystem};
use tt_gauss::ftt::{make_grid, FttApprox};
use tt_gauss::gaussian::{bound_exp_decay, bound_low_rank, generate_precision, PrecisionMatrix, SpectrumSpec};
use tt_gauss::linalg::{expm, matmul, svd, tail_rank};
use tt_gauss::tt::{matricization_rank, tt_svd, DenseTensor};
use tt_gauss::{Matrix, TtTensor};
use tt_gauss_exp::builders::{builder, density_at, BuildOptions};
use tt_gauss_exp::experiments::{filter_run, ExpDecaySweep, LowRankSweep};
use tt_gauss_exp::{Experiment, ExperimentConfig, ExperimentKind};

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(what()) }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = a.iter().map(|x| x * x).sum();
    (num / den).sqrt()
}

fn tt_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let d = rng.random_range(3..=4);
        let modes: Vec<usize> = (0..d).map(|_| rng.random_range(3..=6)).collect();
        // Half fully random, half planted low rank so rank equality is not trivial.
        let full = if case % 2 == 0 {
            DenseTensor::from_fn(&modes, |_| rng.random_range(-1.0..1.0))
        } else {
            let mut ranks = vec![1];
            ranks.extend((1..d).map(|_| rng.random_range(1..=3)));
            ranks.push(1);
            TtTensor::random(&modes, &ranks, &mut rng).unwrap().to_dense()
        };
        let tt = tt_svd(&full, 0.0).map_err(|e| e.to_string())?;
        let err = rel_err(full.data(), tt.to_dense().data());
        worst = worst.max(err);
        check(err <= 1e-10, || format!("case {case}: reconstruction error {err:e}"))?;
        let ranks = tt.ranks();
        for k in 1..d {
            let mr = matricization_rank(&full, k, 1e-10).map_err(|e| e.to_string())?;
            check(ranks[k] == mr, || format!("case {case}: split {k} rank {} vs matricization rank {mr}", ranks[k]))?;
        }
    }
    Ok(format!("50 tensors, worst reconstruction {worst:.1e}"))
}

fn rounding_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let d = rng.random_range(3..=5);
        let modes: Vec<usize> = (0..d).map(|_| rng.random_range(3..=6)).collect();
        let mut ranks = vec![1];
        ranks.extend((1..d).map(|_| rng.random_range(1..=5)));
        ranks.push(1);
        let t = TtTensor::random(&modes, &ranks, &mut rng).unwrap();
        let dense = t.to_dense();
        for eps in [1e-2, 1e-6] {
            let err = rel_err(dense.data(), t.round(eps).to_dense().data());
            worst = worst.max(err / eps);
            check(err <= eps, || format!("case {case}: round at {eps:e} gave {err:e}"))?;
        }
    }
    Ok(format!("50 TTs, worst error/eps {worst:.3}"))
}

fn quadrature_norm() -> Outcome {
    let grid = make_grid(2, 7.0, 60).map_err(|e| e.to_string())?;
    let g = FttApprox::from_dense_samples(grid.clone(), |x| (-0.5 * (x[0] * x[0] + x[1] * x[1])).exp(), 1e-14).map_err(|e| e.to_string())?;
    let norm = g.weighted_l2_norm();
    let dev = (norm - std::f64::consts::PI.sqrt()).abs();
    check(dev <= 1e-7, || format!("‖g‖ = {norm}, off by {dev:e}"))?;

    let f1 = |x: f64| (-(x - 0.5) * (x - 0.5)).exp() * (1.0 + 0.1 * x);
    let f2 = |x: f64| 1.0 / (1.0 + x * x);
    let v1: Vec<f64> = grid.nodes().iter().map(|&x| f1(x)).collect();
    let v2: Vec<f64> = grid.nodes().iter().map(|&x| f2(x)).collect();
    let sep = FttApprox::new(grid.clone(), TtTensor::rank_one(&[v1.clone(), v2.clone()]).unwrap()).map_err(|e| e.to_string())?;
    let norm_1d = |v: &[f64]| v.iter().zip(grid.weights()).map(|(f, w)| w * f * f).sum::<f64>().sqrt();
    let product = norm_1d(&v1) * norm_1d(&v2);
    let rel = (sep.weighted_l2_norm() - product).abs() / product;
    check(rel <= 1e-10, || format!("separable norm off by {rel:e}"))?;
    Ok(format!("√π within {dev:.1e}, separable within {rel:.1e}"))
}

fn cross_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let modes = [20; 4];
    let planted = TtTensor::random(&modes, &[1, 3, 3, 3, 1], &mut rng).unwrap();
    let f = |idx: &[usize]| planted.eval_entry(idx).unwrap();
    let cfg = CrossConfig::new(1e-10);
    let res = cross_approximate(&f, &modes, &cfg).map_err(|e| e.to_string())?;
    check(res.converged && res.est_rel_error <= 1e-9, || format!("est error {:e}, converged {}", res.est_rel_error, res.converged))?;
    check(res.evaluations <= 500_000, || format!("{} oracle calls", res.evaluations))?;
    let true_err = rel_err(planted.to_dense().data(), res.tt.to_dense().data());
    check(true_err <= 1e-9, || format!("dense error {true_err:e}"))?;

    let rank_one = |idx: &[usize]| idx.iter().map(|&i| 1.0 + (i as f64 * 0.3).sin().powi(2)).product::<f64>();
    let r1 = cross_approximate(&rank_one, &modes, &cfg).map_err(|e| e.to_string())?;
    check(r1.tt.ranks().iter().all(|&r| r == 1), || format!("rank-1 oracle gave ranks {:?}", r1.tt.ranks()))?;
    Ok(format!(
        "planted ranks {:?}, est {:.1e}, dense {:.1e}, {} calls; rank-1 ranks {:?}",
        res.tt.ranks(),
        res.est_rel_error,
        true_err,
        res.evaluations,
        r1.tt.ranks()
    ))
}

fn diagonal_rank_one() -> Outcome {
    let mut summary = Vec::new();
    for d in [3, 5, 8] {
        let p = generate_precision(d, &SpectrumSpec::FixedRank { l: 1, sigma: 0.0 }, 0.5, 3).map_err(|e| e.to_string())?;
        let off: f64 = (0..d).flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| p.matrix()[(i, j)].abs()).fold(0.0, f64::max);
        check(off == 0.0, || format!("d={d}: generated Γ has off-diagonal {off:e}"))?;
        let grid = make_grid(d, 7.0, 60).map_err(|e| e.to_string())?;
        let opts = BuildOptions { target: 1e-7, seed: 3, max_rank: 50, max_sweeps: 40, max_evals: None };
        let built = builder("cross").unwrap().build(&p, &grid, &opts).map_err(|e| e.to_string())?;
        let (_, ranks) = built.approx.truncate_to_accuracy(1e-6).map_err(|e| e.to_string())?;
        let max = ranks.iter().copied().max().unwrap();
        check(max == 1, || format!("d={d}: ranks {ranks:?}"))?;
        summary.push(format!("d={d}: {}", max));
    }
    Ok(format!("max ranks {}", summary.join(", ")))
}

fn generator_fidelity() -> Outcome {
    let specs = [SpectrumSpec::FixedRank { l: 2, sigma: 1.0 }, SpectrumSpec::ExpDecay { alpha: 1.0, theta: 1.0 }];
    let (mut worst_dev, mut worst_lambda) = (0.0f64, 0.0f64);
    for spec in &specs {
        for seed in 0..10 {
            let p = generate_precision(15, spec, 0.5, seed).map_err(|e| format!("{} seed {seed}: {e}", spec.descriptor()))?;
            let dev = p.subdiagonal_blocks().map_err(|e| e.to_string())?.deviation_from(spec);
            let dl = (p.lambda_min() - 0.5).abs();
            worst_dev = worst_dev.max(dev);
            worst_lambda = worst_lambda.max(dl);
            check(dev <= 1e-6 && dl <= 1e-8, || format!("{} seed {seed}: deviation {dev:e}, λ_min off by {dl:e}", spec.descriptor()))?;
        }
    }
    Ok(format!("20 matrices, worst spectrum deviation {worst_dev:.1e}, worst λ_min offset {worst_lambda:.1e}"))
}

/// Smallest rank per split of the weighted node tensor with relative tail at most `eps`.
fn eps_ranks(p: &PrecisionMatrix, d: usize, n: usize, eps: &[f64]) -> Vec<Vec<usize>> {
    let grid = make_grid(d, 7.0, n).unwrap();
    let w: Vec<f64> = grid.weights().iter().map(|v| v.sqrt()).collect();
    let full = DenseTensor::from_fn(&grid.mode_sizes(), |idx| density_at(p, &grid, idx) * idx.iter().map(|&i| w[i]).product::<f64>());
    let norm = full.frobenius_norm();
    let spectra: Vec<Vec<f64>> = (1..d).map(|k| svd(&full.unfold(k).unwrap()).unwrap().singular_values).collect();
    eps.iter().map(|&e| spectra.iter().map(|s| tail_rank(s, e * norm).0).collect()).collect()
}

fn bound_domination() -> Outcome {
    let eps = [1e-2, 1e-4, 1e-6];
    let specs = [
        SpectrumSpec::FixedRank { l: 1, sigma: 1.0 },
        SpectrumSpec::FixedRank { l: 2, sigma: 1.0 },
        SpectrumSpec::ExpDecay { alpha: 1.0, theta: 1.0 },
        SpectrumSpec::ExpDecay { alpha: 1.0, theta: 2.0 },
    ];
    let mut checked = 0;
    let mut tightest = f64::INFINITY;
    for (d, n) in [(4, 24), (5, 16)] {
        for spec in &specs {
            for seed in 0..2 {
                let p = generate_precision(d, spec, 0.5, seed).map_err(|e| e.to_string())?;
                let measured = eps_ranks(&p, d, n, &eps);
                for (e, ranks) in eps.iter().zip(&measured) {
                    let bound = match *spec {
                        SpectrumSpec::FixedRank { l, sigma } => bound_low_rank(l, sigma, 0.5, d, *e).unwrap().tight,
                        SpectrumSpec::ExpDecay { alpha, theta } => bound_exp_decay(alpha, theta, 0.5, d, *e).unwrap().bound,
                    };
                    let cap = bound.ceil();
                    for (k, &r) in ranks.iter().enumerate() {
                        check(r as f64 <= cap, || format!("d={d} {} seed {seed} eps {e:e} split {}: rank {r} > {cap}", spec.descriptor(), k + 1))?;
                        tightest = tightest.min(cap / r as f64);
                        checked += 1;
                    }
                }
            }
        }
    }
    Ok(format!("{checked} matricization ranks under the bound, smallest bound/rank ratio {tightest:.1}"))
}

struct SweepRow {
    realization: usize,
    spec: String,
    eps: f64,
    ranks: Vec<usize>,
    max_rank: usize,
    converged: bool,
}

fn sweep_rows(exp: &dyn Experiment, cfg: &ExperimentConfig) -> Result<Vec<SweepRow>, String> {
    let out = exp.run(cfg).map_err(|e| format!("{e:#}"))?;
    let t = &out.tables[0];
    let col = |name: &str| t.header.iter().position(|h| h == name).unwrap();
    Ok(t.rows
        .iter()
        .map(|r| SweepRow {
            realization: r[col("realization")].parse().unwrap(),
            spec: r[col("spec")].clone(),
            eps: r[col("eps")].parse().unwrap(),
            ranks: r[col("ranks")].split(';').map(|v| v.parse().unwrap()).collect(),
            max_rank: r[col("max_rank")].parse().unwrap(),
            converged: r[col("converged")] == "true",
        })
        .collect())
}

fn mean_max_rank(rows: &[SweepRow], spec: &str, eps: f64) -> f64 {
    let sel: Vec<f64> = rows.iter().filter(|r| r.spec == spec && r.eps == eps).map(|r| r.max_rank as f64).collect();
    sel.iter().sum::<f64>() / sel.len() as f64
}

fn qualitative_trends() -> Outcome {
    let desk = |kind| {
        let mut c = ExperimentConfig::defaults_for(kind, false);
        c.d = 8;
        c.n = 80;
        c.realizations = 5;
        c.eps = vec![1e-2, 1e-3, 1e-4];
        c
    };
    let mut lcfg = desk(ExperimentKind::LowRankSweep);
    lcfg.l_values = vec![1, 2, 3];
    let mut tcfg = desk(ExperimentKind::ExpDecaySweep);
    tcfg.theta_values = vec![1.0, 1.5, 2.5];
    let lrows = sweep_rows(&LowRankSweep, &lcfg)?;
    let trows = sweep_rows(&ExpDecaySweep, &tcfg)?;

    let l_means: Vec<f64> = lcfg.l_values.iter().map(|&l| mean_max_rank(&lrows, &SpectrumSpec::FixedRank { l, sigma: 1.0 }.descriptor(), 1e-4)).collect();
    check(l_means.windows(2).all(|w| w[0] <= w[1]), || format!("(a) mean max rank over l = 1, 2, 3: {l_means:?}"))?;
    let t_means: Vec<f64> =
        tcfg.theta_values.iter().map(|&theta| mean_max_rank(&trows, &SpectrumSpec::ExpDecay { alpha: 1.0, theta }.descriptor(), 1e-4)).collect();
    check(t_means.windows(2).all(|w| w[0] >= w[1]), || format!("(b) mean max rank over θ = 1, 1.5, 2.5: {t_means:?}"))?;

    let all: Vec<&SweepRow> = lrows.iter().chain(&trows).collect();
    for r in &all {
        for coarser in all.iter().filter(|c| c.spec == r.spec && c.realization == r.realization && c.eps > r.eps) {
            check(coarser.ranks.iter().zip(&r.ranks).all(|(a, b)| a <= b), || {
                format!("(c) {} realization {}: ranks {:?} at {:e} vs {:?} at {:e}", r.spec, r.realization, coarser.ranks, coarser.eps, r.ranks, r.eps)
            })?;
        }
    }
    let flagged = all.iter().filter(|r| !r.converged).count();
    Ok(format!(
        "(a) l means {:?}, (b) θ means {:?}, (c) nested ranks hold on {} rows; {flagged} rows short of the cross target",
        l_means.iter().map(|v| format!("{v:.1}")).collect::<Vec<_>>(),
        t_means.iter().map(|v| format!("{v:.1}")).collect::<Vec<_>>(),
        all.len()
    ))
}

fn ekf_correctness() -> Outcome {
    // Linear system: the EKF is the Kalman filter of the exact discretization.
    let sys = PendulumSystem::linear(2).unwrap();
    let d = sys.dim();
    let (dt, r, q) = (0.4, 0.04, sys.process_noise_var);
    let f = sys.jacobian(&vec![0.0; d]);
    let block = Matrix::from_fn(2 * d, 2 * d, |i, j| match (i < d, j < d) {
        (true, true) => -f[(i, j)] * dt,
        (true, false) => if i + d == j { q * dt } else { 0.0 },
        (false, true) => 0.0,
        (false, false) => f[(j - d, i - d)] * dt,
    });
    let e = expm(&block).map_err(|e| e.to_string())?;
    let phi = e.submatrix(d..2 * d, d..2 * d).transpose();
    let qd = matmul(&phi, &e.submatrix(0..d, d..2 * d)).unwrap();
    let obs = ObservationModel::first_angle(d, r).unwrap();
    let times: Vec<f64> = (0..=10).map(|l| l as f64 * dt).collect();
    let z: Vec<f64> = (0..=10).map(|l| 0.25 * (0.7 * l as f64).cos()).collect();
    let init = EkfState::isotropic(d, 0.09);
    let states = tt_gauss::filtering::run_ekf(&sys, &obs, &init, &times, &z).map_err(|e| e.to_string())?;
    let kalman_update = |m: &[f64], p: &Matrix, z: f64| {
        let s = p[(0, 0)] + r;
        let k: Vec<f64> = (0..d).map(|i| p[(i, 0)] / s).collect();
        let m2: Vec<f64> = (0..d).map(|i| m[i] + k[i] * (z - m[0])).collect();
        (m2, Matrix::from_fn(d, d, |i, j| p[(i, j)] - k[i] * p[(0, j)]))
    };
    let (mut m, mut p) = kalman_update(&init.mean, &init.cov, z[0]);
    let mut worst = 0.0f64;
    for l in 1..=10 {
        m = phi.matvec(&m).unwrap();
        p = matmul(&matmul(&phi, &p).unwrap(), &phi.transpose()).unwrap().add(&qd).unwrap();
        (m, p) = kalman_update(&m, &p, z[l]);
        let dm = states[l].mean.iter().zip(&m).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let dp = states[l].cov.sub(&p).unwrap().max_abs();
        worst = worst.max(dm).max(dp);
        check(dm <= 1e-8 && dp <= 1e-8, || format!("step {l}: mean {dm:e}, covariance {dp:e}"))?;
    }

    // Scalar update with dyadic numbers, so the closed form is exact.
    let st = EkfState::new(0.0, vec![0.5], Matrix::from_diag(&[3.0])).unwrap();
    let scalar = ObservationModel { h: Matrix::from_diag(&[1.0]), noise_var: 1.0 };
    let up = ekf_update(&st, &scalar, 2.5).map_err(|e| e.to_string())?;
    let (p0, r0) = (3.0, 1.0);
    check(up.cov[(0, 0)] == p0 * r0 / (p0 + r0) && up.mean[0] == 0.5 + p0 / (p0 + r0) * (2.5 - 0.5), || {
        format!("scalar update gave mean {} var {}", up.mean[0], up.cov[(0, 0)])
    })?;

    let sys = PendulumSystem::new(3).unwrap();
    let x = [0.3, -0.2, 0.8, 0.1, -0.5, 0.4];
    let jac = sys.jacobian(&x);
    let mut jac_err = 0.0f64;
    for c in 0..x.len() {
        let h = 1e-6;
        let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
        xp[c] += h;
        xm[c] -= h;
        let (fp, fm) = (sys.dynamics(&xp), sys.dynamics(&xm));
        for r in 0..x.len() {
            jac_err = jac_err.max(((fp[r] - fm[r]) / (2.0 * h) - jac[(r, c)]).abs());
        }
    }
    check(jac_err <= 1e-6, || format!("Jacobian off by {jac_err:e}"))?;
    Ok(format!("oracle gap {worst:.1e} over 10 steps, scalar update exact, Jacobian gap {jac_err:.1e}"))
}

fn filtering_trend() -> Outcome {
    let cfg = ExperimentConfig::defaults_for(ExperimentKind::Filtering, false);
    check(cfg.steps == 50 && (cfg.dt * cfg.steps as f64 - 20.0).abs() < 1e-12 && cfg.n_pendulums == [3, 5, 8, 10], || {
        "desk filtering defaults changed".into()
    })?;
    let mut max_ranks = Vec::new();
    let mut steepest_shallow = f64::NEG_INFINITY;
    for &n in &cfg.n_pendulums {
        let run = filter_run(&cfg, n).map_err(|e| format!("{e:#}"))?;
        let mid = run.snapshots.iter().find(|s| s.label == "mid").unwrap();
        check((mid.t - 10.0).abs() < 1e-9, || format!("mid snapshot at t = {}", mid.t))?;
        check(!mid.slopes.is_empty(), || format!("N={n}: no block with two or more singular values"))?;
        for &s in &mid.slopes {
            steepest_shallow = steepest_shallow.max(s);
            check(s < -0.1, || format!("N={n}: block decay slope {s}"))?;
        }
        max_ranks.push(mid.max_rank);
    }
    check(max_ranks.windows(2).all(|w| w[0] <= w[1]), || format!("max ranks over N = 3, 5, 8, 10: {max_ranks:?}"))?;
    Ok(format!("C(T/2) max ranks {max_ranks:?}, flattest block slope {steepest_shallow:.3}"))
}

fn main() {
    // `cargo test` passes harness flags such as `--quiet`; a filter argument
    // selects criteria by number.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, Duration, fn() -> Outcome); 10] = [
        ("TT-SVD exactness and rank equality", Duration::from_secs(30), tt_exactness),
        ("rounding error bound", Duration::from_secs(30), rounding_bound),
        ("quadrature and weighted norm", Duration::from_secs(5), quadrature_norm),
        ("cross recovery", Duration::from_secs(60), cross_recovery),
        ("diagonal precision gives rank 1", Duration::from_secs(60), diagonal_rank_one),
        ("generator fidelity", Duration::from_secs(60), generator_fidelity),
        ("bound domination", Duration::from_secs(300), bound_domination),
        ("qualitative rank trends", Duration::from_secs(1800), qualitative_trends),
        ("EKF correctness", Duration::from_secs(10), ekf_correctness),
        ("filtering rank trend", Duration::from_secs(300), filtering_trend),
    ];
    let mut failures = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| f == &id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let outcome = outcome.and_then(|msg| {
            if took <= *budget { Ok(msg) } else { Err(format!("{msg}; took {took:.1?}, budget {budget:?}")) }
        });
        match outcome {
            Ok(msg) => println!("PASS [{id:>2}] {name} ({took:.1?}): {msg}"),
            Err(msg) => {
                failures += 1;
                println!("FAIL [{id:>2}] {name} ({took:.1?}): {msg}");
            }
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
