//! Acceptance checks, one line per criterion. Runs as a plain binary so the
//! report is always printed; exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use sketchls::harness::synth::{generate_synthetic, Coherence, SyntheticSpec};
use sketchls::problem::profile_value_at;
use sketchls::rpc::{newton_gamma, rpc_gradient, rpc_objective, secular_phi, worst_case_perturbation};
use sketchls::solvers::{solve_blendenpik, solve_cls, solve_pcls, solve_plain_lsqr};
use sketchls::{
    eps_optimality, relative_accuracy, rpc_oracle, solve_ols, solve_rpc_sketched, LSProblem, OlsMethod, RpcParams,
    SketchKind, SketchOperator, SketchSpec, SketchedProblem, SpectralData,
};

type Outcome = Result<String, String>;

fn randn(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn randv(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

fn gaussian_problem(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> LSProblem {
    LSProblem::new(randn(rows, cols, rng), randv(rows, rng)).unwrap()
}

fn sketch(kind: SketchKind, m: usize, rows: usize, seed: u64) -> SketchOperator {
    SketchOperator::new(SketchSpec::new(kind, m, rows, seed).unwrap()).unwrap()
}

/// Least squares through a full SVD, independent of the library's QR path.
fn svd_lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    a.clone().svd(true, true).solve(b, 0.0).unwrap()
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

fn percentile(v: &mut [f64], p: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    let rank = (p * (v.len() - 1) as f64).round() as usize;
    v[rank]
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    check(elapsed.as_secs_f64() < limit_s, || {
        format!("runtime {:.2}s exceeds {limit_s}s", elapsed.as_secs_f64())
    })
}

fn worst_case_tightness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_attain = 0.0f64;
    let mut worst_norm = 0.0f64;
    let mut feasible = 0;
    for i in 0..200 {
        let p = randn(20, 6, &mut rng);
        let x = randv(6, &mut rng);
        let rho = [0.1, 1.0, 10.0][i % 3];
        let bound = ((&p * &x).norm() + rho * x.norm()).powi(2);
        let dp = worst_case_perturbation(&p, &x, rho).map_err(|e| e.to_string())?;
        worst_norm = worst_norm.max((dp.norm() - rho).abs() / rho);
        let attained = ((&p + &dp) * &x).norm_squared();
        worst_attain = worst_attain.max((attained - bound).abs() / bound);
        // five feasible draws per instance, 1000 in total
        for _ in 0..5 {
            let d = randn(20, 6, &mut rng);
            let scale = rho * rng.random::<f64>().sqrt() / d.norm();
            let value = ((&p + d * scale) * &x).norm_squared();
            check(value <= bound * (1.0 + 1e-12), || format!("feasible perturbation exceeds bound: {value} > {bound}"))?;
            feasible += 1;
        }
    }
    check(worst_norm <= 1e-10, || format!("‖ΔP‖_F off by {worst_norm:e} relative"))?;
    check(worst_attain <= 1e-10, || format!("worst case missed by {worst_attain:e} relative"))?;
    within(start.elapsed(), 10.0)?;
    Ok(format!("max rel gap {worst_attain:.1e}, ‖ΔP‖ err {worst_norm:.1e}, {feasible} feasible draws within bound"))
}

fn rpc_fixed_point() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let problem = gaussian_problem(500, 20, &mut rng);
        let op = sketch(SketchKind::Gaussian, 100, 500, 1000 + i);
        let sp = SketchedProblem::from_problem(&problem, &op).unwrap();
        let sol = solve_rpc_sketched(&sp, &RpcParams::with_rho(1.0)).map_err(|e| format!("instance {i}: {e}"))?;
        check(sol.converged, || format!("instance {i} not converged"))?;
        let px = (sp.p() * &sol.x).norm();
        let nx = sol.x.norm();
        let ea = (sol.alpha - px).abs() / sol.alpha;
        let eb = (sol.beta - nx).abs() / sol.beta;
        let et = (sol.tau - (sol.alpha + sol.beta)).abs() / sol.tau;
        let ef = sol.foc_residual / sp.c().norm();
        let e = ea.max(eb).max(et).max(ef);
        check(e <= 1e-6, || format!("instance {i}: α {ea:e}, β {eb:e}, τ {et:e}, foc {ef:e}"))?;
        worst = worst.max(e);
    }
    within(start.elapsed(), 30.0)?;
    Ok(format!("max relative violation {worst:.1e}"))
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let n = rng.random_range(1..=10);
        let rows = 120;
        let m = rng.random_range(n..=6 * n);
        let kind = SketchKind::ALL[i as usize % 3];
        let rho = [0.1, 0.5, 1.0, 3.0][i as usize % 4];
        let problem = gaussian_problem(rows, n, &mut rng);
        let sp = SketchedProblem::from_problem(&problem, &sketch(kind, m, rows, 50 + i)).unwrap();
        let sol = solve_rpc_sketched(&sp, &RpcParams::with_rho(rho)).map_err(|e| format!("instance {i}: {e}"))?;
        let (_, f_oracle) = rpc_oracle(&sp, rho, 1e-12).map_err(|e| format!("oracle {i}: {e}"))?;
        let rel = (sol.objective - f_oracle).abs() / f_oracle.abs();
        check(rel <= 1e-6, || format!("instance {i} (N={n}, m={m}, {kind}): {} vs {f_oracle}", sol.objective))?;
        worst = worst.max(rel);
    }
    let sp = SketchedProblem::new(
        DMatrix::from_element(1, 1, 1.0),
        DVector::from_element(1, 0.0),
        DVector::from_element(1, 1.0),
    )
    .unwrap();
    let sol = solve_rpc_sketched(&sp, &RpcParams::with_rho(1.0)).map_err(|e| e.to_string())?;
    check((sol.x[0] - 0.25).abs() <= 1e-8, || format!("N=1 minimizer {}", sol.x[0]))?;
    check((sol.objective + 0.125).abs() <= 1e-8, || format!("N=1 value {}", sol.objective))?;
    within(start.elapsed(), 10.0)?;
    Ok(format!("max rel objective gap {worst:.1e}; N=1 x = {:.10}", sol.x[0]))
}

fn degenerate_and_limits() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // Aᵀb = 0, both through b = 0 and through c = 0 with a nonzero sketched rhs
    let a = randn(60, 5, &mut rng);
    let problem = LSProblem::new(a.clone(), DVector::zeros(60)).unwrap();
    let sp = SketchedProblem::from_problem(&problem, &sketch(SketchKind::Ros, 20, 60, 2)).unwrap();
    let sol = solve_rpc_sketched(&sp, &RpcParams::default()).map_err(|e| e.to_string())?;
    check(sol.x.iter().all(|v| *v == 0.0), || "x_RPC not exactly zero for b = 0".into())?;
    let sp = SketchedProblem::new(
        sketch(SketchKind::Gaussian, 20, 60, 1).apply(&a).unwrap(),
        randv(20, &mut rng),
        DVector::zeros(5),
    )
    .unwrap();
    let sol = solve_rpc_sketched(&sp, &RpcParams::default()).map_err(|e| e.to_string())?;
    check(sol.x.iter().all(|v| *v == 0.0), || "x_RPC not exactly zero for c = 0".into())?;

    // ρ → 0
    let mut worst_rho = 0.0f64;
    for seed in 0..5 {
        let inst = generate_synthetic(&SyntheticSpec::new(400, 10, 10.0, Coherence::Incoherent, seed)).unwrap();
        let sp = SketchedProblem::from_problem(&inst.problem, &sketch(SketchKind::Gaussian, 100, 400, seed)).unwrap();
        let pcls = solve_pcls(&sp).map_err(|e| e.to_string())?;
        let rpc = solve_rpc_sketched(&sp, &RpcParams::with_rho(1e-8)).map_err(|e| e.to_string())?;
        let rel = (rpc.x - &pcls).norm() / pcls.norm();
        check(rel <= 1e-5, || format!("ρ=1e-8 gap {rel:e}"))?;
        worst_rho = worst_rho.max(rel);
    }

    // Φ = I
    let problem = gaussian_problem(80, 7, &mut rng);
    let sp = SketchedProblem::from_problem(&problem, &SketchOperator::identity(80).unwrap()).unwrap();
    let cls = solve_cls(&sp).map_err(|e| e.to_string())?;
    let pcls = solve_pcls(&sp).map_err(|e| e.to_string())?;
    let ols = svd_lstsq(problem.a(), problem.b());
    let gap = (&cls - &ols).norm().max((&pcls - &ols).norm()) / ols.norm();
    check(gap <= 1e-10, || format!("Φ = I gap {gap:e}"))?;
    Ok(format!("c=0 → 0 exactly; ρ=1e-8 gap {worst_rho:.1e}; Φ=I gap {gap:.1e}"))
}

fn error_identities() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for kind in SketchKind::ALL {
        for i in 0..50u64 {
            let (rows, n) = (128, 6);
            let m = 40;
            let problem = gaussian_problem(rows, n, &mut rng);
            let op = sketch(kind, m, rows, 7000 + i);
            let phi = op.to_dense();
            let p = &phi * problem.a();
            let sp = SketchedProblem::from_problem(&problem, &op).unwrap();
            let x_ls = svd_lstsq(problem.a(), problem.b());
            let z = problem.b() - problem.a() * &x_ls;
            let pinv = (p.transpose() * &p).try_inverse().ok_or("PᵀP singular")?;
            // x_CLS = x_LS + (PᵀP)⁻¹ Pᵀ Φ z*
            let x_cls = solve_cls(&sp).map_err(|e| e.to_string())?;
            let rhs_cls = &x_ls + &pinv * p.transpose() * (&phi * &z);
            // x_PCLS = (PᵀP)⁻¹ AᵀA x_LS
            let x_pcls = solve_pcls(&sp).map_err(|e| e.to_string())?;
            let rhs_pcls = &pinv * (problem.a().transpose() * problem.a()) * &x_ls;
            let e1 = (&x_cls - &rhs_cls).norm() / x_cls.norm();
            let e2 = (&x_pcls - &rhs_pcls).norm() / x_pcls.norm();
            check(e1 <= 1e-8 && e2 <= 1e-8, || format!("{kind} #{i}: CLS {e1:e}, PCLS {e2:e}"))?;
            worst = worst.max(e1).max(e2);
        }
    }
    within(start.elapsed(), 30.0)?;
    Ok(format!("max rel error {worst:.1e} over 150 instances"))
}

fn sketch_unbiasedness() -> Outcome {
    let (rows, m, seeds) = (64, 32, 2000u64);
    let mut report = Vec::new();
    for kind in SketchKind::ALL {
        let mut mean = DMatrix::<f64>::zeros(rows, rows);
        for seed in 0..seeds {
            let phi = sketch(kind, m, rows, seed).to_dense();
            let gram = phi.transpose() * &phi;
            if kind == SketchKind::CountSketch {
                check(gram.diagonal().iter().all(|d| *d == 1.0), || format!("count sketch diagonal ≠ 1 (seed {seed})"))?;
            }
            mean += gram;
        }
        mean /= seeds as f64;
        let dev = (mean - DMatrix::<f64>::identity(rows, rows)).amax();
        check(dev <= 0.05, || format!("{kind}: max |E[ΦᵀΦ] − I| = {dev}"))?;
        report.push(format!("{kind} {dev:.3}"));
    }
    let phi = sketch(SketchKind::Ros, 64, 64, 9).to_dense();
    let dev = (phi.transpose() * &phi - DMatrix::<f64>::identity(64, 64)).amax();
    check(dev <= 1e-10, || format!("full ROS ΦᵀΦ − I = {dev:e}"))?;
    Ok(format!("max entry deviation: {}; full ROS {dev:.1e}", report.join(", ")))
}

fn secular_newton() -> Outcome {
    // N = 1 closed form
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst1 = 0.0f64;
    for _ in 0..50 {
        let s: f64 = rng.random_range(0.1..5.0);
        let bb: f64 = rng.random_range(-5.0..5.0);
        let rho: f64 = rng.random_range(0.1..3.0);
        let tau = rng.random_range(0.05..0.95) * bb.abs() / rho;
        let spectral = SpectralData::of(&DMatrix::from_element(1, 1, s)).unwrap();
        let bbar = DVector::from_element(1, bb);
        let g = newton_gamma(&spectral, &bbar, rho, tau, 1e-14, 100).map_err(|e| e.to_string())?.x;
        let exact = (bb.abs() / tau - rho) / (s * s);
        let rel = (g - exact).abs() / exact;
        check(rel <= 1e-10, || format!("N=1: γ = {g}, closed form {exact}"))?;
        worst1 = worst1.max(rel);
    }
    // N = 6 against plain bisection
    let mut worst6 = 0.0f64;
    for _ in 0..50 {
        let p = randn(10, 6, &mut rng);
        let spectral = SpectralData::of(&p).unwrap();
        let bbar = randv(6, &mut rng);
        let rho: f64 = rng.random_range(0.1..3.0);
        let tau = rng.random_range(0.05..0.95) * bbar.norm() / rho;
        let phi = |g: f64| {
            let s: f64 = (0..6)
                .map(|i| (bbar[i] / (g * spectral.sigma[i].powi(2) + rho)).powi(2))
                .sum();
            s / (tau * tau) - 1.0
        };
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while phi(hi) > 0.0 {
            hi *= 2.0;
        }
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if phi(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        let g = newton_gamma(&spectral, &bbar, rho, tau, 1e-14, 100).map_err(|e| e.to_string())?.x;
        let rel = (g - oracle).abs() / oracle;
        check(rel <= 1e-10, || format!("N=6: γ = {g}, bisection {oracle}"))?;
        worst6 = worst6.max(rel);
        for k in 0..200 {
            let gamma = hi * 4.0 * k as f64 / 200.0;
            let (_, d) = secular_phi(&spectral, &bbar, rho, tau, gamma);
            check(d <= 0.0, || format!("φ′({gamma}) = {d} > 0"))?;
        }
    }
    Ok(format!("N=1 rel err {worst1:.1e}; N=6 vs bisection {worst6:.1e}; φ′ ≤ 0 on grids"))
}

fn pcls_vs_cls() -> Outcome {
    let spec = SyntheticSpec::new(3000, 75, 1e4, Coherence::Incoherent, 8).residual_fraction(2.0);
    let problem = generate_synthetic(&spec).unwrap().problem;
    let x_ls = solve_ols(&problem, OlsMethod::Factorized).unwrap();
    let m = 750;
    let (mut cls, mut pcls) = (Vec::new(), Vec::new());
    for seed in 0..50 {
        let sp = SketchedProblem::from_problem(&problem, &sketch(SketchKind::Ros, m, 3000, 800 + seed)).unwrap();
        cls.push(relative_accuracy(&solve_cls(&sp).unwrap(), &problem, &x_ls));
        pcls.push(relative_accuracy(&solve_pcls(&sp).unwrap(), &problem, &x_ls));
    }
    let (mc, mp) = (median(&mut cls), median(&mut pcls));
    check(mp < mc, || format!("median PCLS {mp:.4e} not below CLS {mc:.4e}"))?;
    Ok(format!("median relative accuracy PCLS {mp:.4e} < CLS {mc:.4e}"))
}

fn eps_scaling() -> Outcome {
    let start = Instant::now();
    let spec = SyntheticSpec::new(2000, 50, 1e4, Coherence::Incoherent, 9);
    let problem = generate_synthetic(&spec).unwrap().problem;
    let x_ls = solve_ols(&problem, OlsMethod::Factorized).unwrap();
    let run = |m: usize, base: u64| -> Vec<f64> {
        (0..200)
            .map(|t| {
                let sp = SketchedProblem::from_problem(&problem, &sketch(SketchKind::Gaussian, m, 2000, base + t)).unwrap();
                eps_optimality(&solve_pcls(&sp).unwrap(), &problem, &x_ls).unwrap()
            })
            .collect()
    };
    let mut small = run(4 * 50, 10_000);
    let mut large = run(16 * 50, 20_000);
    let (ms, ml) = (median(&mut small), median(&mut large));
    let ratio = ms / ml;
    within(start.elapsed(), 120.0)?;
    check((1.4..=2.8).contains(&ratio), || {
        format!("median eps ratio m=4N/m=16N = {ratio:.3} (medians {ms:.4e}, {ml:.4e}) outside [1.4, 2.8]")
    })?;
    Ok(format!("median eps ratio {ratio:.3} (medians {ms:.4e}, {ml:.4e})"))
}

fn small_m_robustness() -> Outcome {
    let spec = SyntheticSpec::new(500, 20, 1e4, Coherence::Incoherent, 10);
    let problem = generate_synthetic(&spec).unwrap().problem;
    let x_ls = solve_ols(&problem, OlsMethod::Factorized).unwrap();
    let m = 20 + 5;
    let (mut rpc, mut pcls) = (Vec::new(), Vec::new());
    for seed in 0..200 {
        let sp = SketchedProblem::from_problem(&problem, &sketch(SketchKind::Gaussian, m, 500, 3000 + seed)).unwrap();
        pcls.push(relative_accuracy(&solve_pcls(&sp).unwrap(), &problem, &x_ls));
        let sol = solve_rpc_sketched(&sp, &RpcParams::with_rho(1.0)).map_err(|e| format!("trial {seed}: {e}"))?;
        rpc.push(relative_accuracy(&sol.x, &problem, &x_ls));
    }
    let (pr, pp) = (percentile(&mut rpc, 0.9), percentile(&mut pcls, 0.9));
    check(pr < pp, || format!("90th percentile RPC {pr:.4e} not below PCLS {pp:.4e}"))?;
    Ok(format!("90th percentile relative accuracy RPC {pr:.4e} < PCLS {pp:.4e}"))
}

fn blendenpik_baseline() -> Outcome {
    let spec = SyntheticSpec::new(2000, 50, 1e6, Coherence::Incoherent, 11);
    let problem = generate_synthetic(&spec).unwrap().problem;
    let x_ls = solve_ols(&problem, OlsMethod::Factorized).unwrap();
    let tol = 1e-8;
    let op = sketch(SketchKind::Gaussian, 4 * 50, 2000, 12);
    let pre = solve_blendenpik(&problem, &op, tol, 100).map_err(|e| format!("preconditioned: {e}"))?;
    let eps = eps_optimality(&pre.x, &problem, &x_ls).unwrap();
    check(eps <= 1e-6, || format!("eps_optimality {eps:e} after {} iterations", pre.iterations))?;
    check(pre.iterations <= 100, || format!("{} iterations", pre.iterations))?;
    let plain_iters = match solve_plain_lsqr(&problem, tol, 100) {
        Ok(out) => out.iterations,
        Err(sketchls::Error::NotConverged { .. }) => 101,
        Err(e) => return Err(e.to_string()),
    };
    check(plain_iters > 100, || format!("unpreconditioned LSQR converged in {plain_iters} iterations"))?;
    Ok(format!("preconditioned: {} iterations, eps {eps:.1e}; unpreconditioned: > 100", pre.iterations))
}

fn profile_cli() -> Outcome {
    let out = Command::new(env!("CARGO_BIN_EXE_sketchls"))
        .args(["profile", "--values", "1.04,1.00,1.02"])
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
    let text = String::from_utf8(out.stdout).map_err(|e| e.to_string())?;
    let lines: Vec<&str> = text.lines().collect();
    check(lines.len() == 4 && lines[0] == "group,fraction,value", || format!("unexpected output {text:?}"))?;
    let rows: Vec<(f64, f64)> = lines[1..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    let expected = [(1.0 / 3.0, 1.00), (2.0 / 3.0, 1.02), (1.0, 1.04)];
    for (got, want) in rows.iter().zip(expected) {
        check((got.0 - want.0).abs() < 1e-15 && got.1 == want.1, || format!("row {got:?}, expected {want:?}"))?;
    }
    let at_half = profile_value_at(&rows, 0.5).ok_or("no fraction-0.5 entry")?;
    check(at_half == 1.02, || format!("fraction-0.5 entry {at_half} ≠ median 1.02"))?;
    Ok("three sorted CDF rows; fraction 0.5 → 1.02".into())
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let n = 6;
        let p = randn(15, n, &mut rng);
        let c = randv(n, &mut rng);
        let sp = SketchedProblem::new(p, DVector::zeros(15), c).unwrap();
        let rho = [0.3, 1.0, 2.5][i % 3];
        let x = randv(n, &mut rng);
        let g = rpc_gradient(&sp, &x, rho).map_err(|e| e.to_string())?;
        let fd = DVector::from_fn(n, |j, _| {
            let h = 1e-6 * x[j].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            (rpc_objective(&sp, &xp, rho) - rpc_objective(&sp, &xm, rho)) / (2.0 * h)
        });
        let rel = (&fd - &g).norm() / g.norm();
        check(rel <= 1e-5, || format!("point {i}: relative gradient error {rel:e}"))?;
        worst = worst.max(rel);
    }
    Ok(format!("max relative error {worst:.1e}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("worst-case perturbation tightness", worst_case_tightness),
        ("RPC fixed point", rpc_fixed_point),
        ("RPC vs independent oracle", oracle_equivalence),
        ("degenerate and limit cases", degenerate_and_limits),
        ("error decomposition identities", error_identities),
        ("sketch unbiasedness", sketch_unbiasedness),
        ("secular Newton solver", secular_newton),
        ("PCLS beats CLS at large residual", pcls_vs_cls),
        ("eps-optimality scaling in m", eps_scaling),
        ("RPC robustness at small m", small_m_robustness),
        ("preconditioned LSQR baseline", blendenpik_baseline),
        ("profile CLI", profile_cli),
        ("RPC gradient check", gradient_check),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.2}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.2}s): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
