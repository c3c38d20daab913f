//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

use dppfluct::cumulants::{composition_series_c2, cumulants_windowed, cumulants_windowed_report, CumulantRequest};
use dppfluct::dense::{expm, principal_block_det};
use dppfluct::dpp::{determinant_cumulants_fd, enumerate_small, variance_oracle, DiscreteOPE};
use dppfluct::ensembles::{EnsembleSpec, Family};
use dppfluct::gff::{compare, standard_bumps, GffGeometry};
use dppfluct::montecarlo::{run_experiment, OuConfig};
use dppfluct::symbols::{
    ehrhardt_log_det, hankel_product_trace, variance_growing, GrowingQuadrature, LaurentSymbol,
    LayeredStatistic,
};
use dppfluct::{Execution, Polynomial};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn sci(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|v| format!("{v:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn x() -> Polynomial {
    Polynomial::monomial(vec![0.0, 1.0])
}

fn hermite_request(n: usize, times: &[f64], layers: Vec<Polynomial>, k_max: usize) -> CumulantRequest {
    let spec = EnsembleSpec::new(Family::HermiteOU, n).unwrap();
    let stat = LayeredStatistic::new(layers, times.to_vec()).unwrap();
    let size = n + 4 * (k_max + 2) + 64;
    let mats = times.iter().map(|&t| spec.weighted_recurrence(t, size).unwrap()).collect();
    CumulantRequest::new(mats, stat, n, k_max)
}

fn toeplitz_variance_convergence() -> Outcome {
    let start = Instant::now();
    let mut errs = Vec::new();
    for n in [200, 800, 3200] {
        let req = hermite_request(n, &[0.0], vec![x()], 2);
        match cumulants_windowed(&req, 2) {
            Ok(c2) => errs.push((c2 - 1.0).abs()),
            Err(e) => return outcome(false, format!("n={n}: {e}")),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let last = *errs.last().unwrap();
    outcome(
        last < 1e-2 && secs < 10.0,
        format!("errors {}, runtime {secs:.2} s", sci(&errs)),
    )
}

/// Roundoff floor of a contour-extracted `𝒞_k`: an absolute error `ε` in
/// `ln det` is amplified by `k! / r^k`.
fn contour_noise_floor(k: usize, radius: f64) -> f64 {
    let fact: f64 = (1..=k).map(|i| i as f64).product();
    1e-13 * fact / radius.powi(k as i32)
}

fn two_time_clt() -> Outcome {
    let times = [0.0, 0.5];
    let want = 2.0 + 2.0 * (-0.5f64).exp();
    let mut c2 = 0.0;
    let mut c3 = Vec::new();
    let mut c4 = Vec::new();
    let mut radii = Vec::new();
    for n in [200, 800, 3200] {
        let req = hermite_request(n, &times, vec![x(), x()], 4);
        match cumulants_windowed_report(&req) {
            Ok(r) => {
                c2 = r.get(2).unwrap();
                c3.push(r.get(3).unwrap().abs());
                c4.push(r.get(4).unwrap().abs());
                radii.push(r.diagnostics.radius);
            }
            Err(e) => return outcome(false, format!("n={n}: {e}")),
        }
    }
    // Non-increasing in n once values are above the roundoff floor.
    let decreasing = |vals: &[f64], k: usize| {
        (1..vals.len()).all(|i| vals[i] <= vals[i - 1].max(contour_noise_floor(k, radii[i])))
    };
    let small = c3[2] < 5e-2 && c4[2] < 5e-2;
    let pass = (c2 - want).abs() < 2e-2 && small && decreasing(&c3, 3) && decreasing(&c4, 4);
    outcome(
        pass,
        format!(
            "C2(3200) = {c2:.6} (target {want:.6}); |C3| = {}, |C4| = {} at n = 200, 800, 3200 (roundoff floors {:.1e}, {:.1e})",
            sci(&c3),
            sci(&c4),
            contour_noise_floor(3, radii[2]),
            contour_noise_floor(4, radii[2])
        ),
    )
}

/// Adds `U(-amount, amount)` noise to every band entry of `layer` selected by `pick`.
fn perturb_region<F: Fn(usize, usize) -> bool>(
    req: &mut CumulantRequest,
    layer: usize,
    amount: f64,
    rng: &mut ChaCha8Rng,
    pick: F,
) -> usize {
    let m = &mut req.matrices[layer];
    let (dim, bw) = (m.dim(), m.bandwidth());
    let mut touched = 0;
    for r in 1..=dim {
        for s in r.saturating_sub(bw).max(1)..=(r + bw).min(dim) {
            if pick(r, s) {
                let v = m.get(r, s);
                m.set(r, s, v + rng.random_range(-amount..amount)).unwrap();
                touched += 1;
            }
        }
    }
    touched
}

fn comparison_principle() -> Outcome {
    let n = 300;
    let times = [0.0, 0.5];
    let base = hermite_request(n, &times, vec![x(), x()], 3);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let reference: Vec<f64> = (2..=3).map(|k| cumulants_windowed(&base, k).unwrap()).collect();
    let (mut outside_ok, mut inside_ok) = (0, 0);
    let (mut outside, mut inside) = (0, 0);
    for trial in 0..50 {
        let mut req = base.clone();
        let layer = rng.random_range(0..times.len());
        let amount = rng.random_range(0.05..0.5);
        let k = 2 + trial % 2;
        // f(x) = x, so the layer bandwidth is that of the recurrence matrix.
        let width = 2 * (k + 1);
        let (lo, hi) = (n - width, n + width);
        let is_outside = trial < 25;
        let inside_window = |r: usize| r >= lo && r <= hi;
        let touched = if is_outside {
            perturb_region(&mut req, layer, amount, &mut rng, |r, s| !inside_window(r) && !inside_window(s))
        } else {
            perturb_region(&mut req, layer, amount, &mut rng, |r, s| inside_window(r) && inside_window(s))
        };
        if touched == 0 {
            return outcome(false, "empty perturbation region".into());
        }
        let delta = cumulants_windowed(&req, k).unwrap() - reference[k - 2];
        if is_outside {
            outside += 1;
            if delta == 0.0 {
                outside_ok += 1;
            }
        } else {
            inside += 1;
            if delta.abs() > 1e-9 {
                inside_ok += 1;
            }
        }
    }
    outcome(
        outside_ok == outside && inside_ok == inside,
        format!("outside unchanged {outside_ok}/{outside}, inside changed {inside_ok}/{inside}"),
    )
}

fn determinant_identity_oracle() -> Outcome {
    let start = Instant::now();
    let cases: Vec<(&str, DiscreteOPE)> = vec![
        ("Krawtchouk M=6 n=3", DiscreteOPE::krawtchouk(6, 0.5, 3).unwrap()),
        ("Charlier mu=1 n=2", DiscreteOPE::charlier(1.0, 2).unwrap()),
        ("Meixner beta=2 mu=0.4 n=3", DiscreteOPE::meixner(2.0, 0.4, 3).unwrap()),
    ];
    let mut worst_moment: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    for (_, ope) in &cases {
        let f: Vec<f64> = ope.grid().to_vec();
        let e = enumerate_small(ope, &f).unwrap();
        let fd = determinant_cumulants_fd(ope, &x()).unwrap();
        let want = [e.mean, e.variance, e.third_cumulant, e.fourth_cumulant];
        let sd = e.variance.sqrt();
        for k in 0..4 {
            // Relative to the natural scale σ^k of the k-th cumulant when it vanishes.
            let scale = want[k].abs().max(sd.powi(k as i32 + 1));
            worst_moment = worst_moment.max((fd[k] - want[k]).abs() / scale);
        }
        worst_var = worst_var.max((variance_oracle(ope, &f).unwrap() - e.variance).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_moment < 1e-7 && worst_var < 1e-10 && secs < 5.0,
        format!(
            "moment rel. error {worst_moment:.2e}, variance error {worst_var:.2e}, runtime {secs:.2} s ({})",
            cases.iter().map(|c| c.0).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn random_symbol(rng: &mut ChaCha8Rng, deg: i64) -> LaurentSymbol {
    LaurentSymbol::new(-deg, (0..2 * deg + 1).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn ehrhardt_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let size = 400;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        // Draw pairs until the closing symbol also has coefficients in [-1, 1].
        let triple = loop {
            let deg = rng.random_range(1..=3);
            let a = random_symbol(&mut rng, deg);
            let b = random_symbol(&mut rng, deg);
            let c = a.add_neg(&b);
            if c.max_abs_coeff() <= 1.0 {
                break [a, b, c];
            }
        };
        let analytic = ehrhardt_log_det(&triple).unwrap();
        let mut prod = DMatrix::<f64>::identity(size, size);
        for s in &triple {
            prod *= expm(&s.toeplitz(size)).unwrap();
        }
        let (sign, dense) = principal_block_det(&prod, size / 2).unwrap();
        if sign <= 0.0 {
            return outcome(false, "truncated determinant not positive".into());
        }
        worst = worst.max((analytic - dense).abs());
    }
    outcome(worst < 1e-8, format!("max |analytic - truncated| = {worst:.2e} over 10 triples"))
}

trait NegSum {
    fn add_neg(&self, other: &Self) -> Self;
}

impl NegSum for LaurentSymbol {
    /// `-(self + other)`, closing a zero-sum triple.
    fn add_neg(&self, other: &Self) -> Self {
        let lo = self.min_power().min(other.min_power());
        let hi = self.max_power().max(other.max_power());
        LaurentSymbol::new(lo, (lo..=hi).map(|j| -(self.coeff(j) + other.coeff(j))).collect())
    }
}

fn hankel_trace_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let deg = rng.random_range(1..=5);
        let a = random_symbol(&mut rng, deg);
        let b = random_symbol(&mut rng, deg);
        let size = 2 * deg as usize + 2;
        let trace = (a.hankel(size) * b.reflected().hankel(size)).trace();
        worst = worst.max((trace - hankel_product_trace(&a, &b)).abs());
    }
    outcome(worst < 1e-12, format!("max deviation {worst:.2e} over 100 pairs"))
}

fn monte_carlo_clt() -> Outcome {
    let start = Instant::now();
    let times = vec![0.0, 0.5];
    let stat = LayeredStatistic::uniform(x(), times.clone()).unwrap();
    let cfg = OuConfig::new(100, times.clone(), 100_000, 20_240_501);
    let report = match run_experiment(&cfg, std::slice::from_ref(&stat), Execution::Parallel, false) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let secs = start.elapsed().as_secs_f64();
    let s = &report.statistics[0];
    let want = 2.0 + 2.0 * (-0.5f64).exp();
    let var_ok = (s.variance - want).abs() < 3.0 * s.se_variance;
    let k3_ok = s.k3.abs() < 3.0 * s.se_k3;
    let k4_ok = s.k4.abs() < 3.0 * s.se_k4;

    let small = OuConfig::new(100, times, 4_000, 77);
    let stats = [stat];
    let runs: Vec<_> = [1usize, 2, 4]
        .iter()
        .map(|&threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| run_experiment(&small, &stats, Execution::Parallel, true).unwrap())
        })
        .collect();
    let seq = run_experiment(&small, &stats, Execution::Sequential, true).unwrap();
    let deterministic = runs
        .iter()
        .all(|r| r.statistics == seq.statistics && r.samples == seq.samples);
    outcome(
        var_ok && k3_ok && k4_ok && deterministic && secs < 600.0,
        format!(
            "var {:.5} ± {:.5} (target {want:.5}), k3 {:.4} ± {:.4}, k4 {:.4} ± {:.4}, deterministic {deterministic}, runtime {secs:.1} s",
            s.variance, s.se_variance, s.k3, s.se_k3, s.k4, s.se_k4
        ),
    )
}

fn gff_identity() -> Outcome {
    let start = Instant::now();
    let geom = GffGeometry::ornstein_uhlenbeck((0.0, 1.0)).unwrap();
    let mut gaps = Vec::new();
    for phi in standard_bumps() {
        match compare(&phi, &geom, 64, 64) {
            Ok(c) => gaps.push(c.relative_gap),
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let worst = gaps.iter().cloned().fold(0.0, f64::max);
    outcome(
        worst < 1e-3 && secs < 60.0,
        format!("relative gaps {}, runtime {secs:.1} s", sci(&gaps)),
    )
}

fn ensemble_limits() -> Outcome {
    let n = 10_000;
    let mu: f64 = 0.3;
    let (p, gamma): (f64, f64) = (0.3, 2.0);
    let cases: Vec<(&str, Family, f64, f64)> = vec![
        ("Laguerre", Family::LaguerreSquaredOU { r: 1.0 }, 1.0, 2.0),
        ("Jacobi", Family::JacobiDiffusion { alpha: 1.0, beta: 2.0 }, 0.25, 0.5),
        (
            "Meixner",
            Family::Meixner { gamma: 1.5, mu },
            mu.sqrt() / (1.0 - mu),
            (1.0 + mu) / (1.0 - mu),
        ),
        ("Charlier edge", Family::CharlierEdge { mu: 0.25 }, 0.5, 0.0),
        ("Charlier bulk", Family::CharlierBulk { mu_tilde: 2.0 }, 2f64.sqrt(), 3.0),
        (
            "Krawtchouk",
            Family::Krawtchouk { p, gamma },
            (p * (1.0 - p) * gamma).sqrt(),
            p * gamma - 2.0 * p + 1.0,
        ),
    ];
    let mut failed = Vec::new();
    let mut lines = Vec::new();
    for (name, family, a_lim, b_lim) in cases {
        let spec = EnsembleSpec::new(family, n).unwrap();
        let (b, a) = spec.coefficients(0.0, n).unwrap();
        let err = (a - a_lim).abs().max((b - b_lim).abs());
        lines.push(format!("{name} {err:.1e}"));
        if err >= 5e-3 {
            failed.push(format!("{name}: a = {a:.5} vs {a_lim:.5}, b = {b:.5} vs {b_lim:.5}"));
        }
    }
    let detail = if failed.is_empty() {
        lines.join(", ")
    } else {
        format!("{}; mismatch: {}", lines.join(", "), failed.join("; "))
    };
    outcome(failed.is_empty(), detail)
}

fn growing_variant() -> Outcome {
    // g(t, x) = x on [0, ½), x² on [½, 1].
    let quad = GrowingQuadrature {
        series_k: 4,
        theta_nodes: 16,
        breakpoints: vec![0.5],
        ..Default::default()
    };
    let exact = variance_growing(
        |t, x| if t < 0.5 { x } else { x * x },
        |_| 0.0,
        |_| 1.0,
        |t| t,
        (0.0, 1.0),
        &quad,
    )
    .unwrap()
    .value;
    let n = 400;
    let mut errs = Vec::new();
    for layers in [4usize, 16, 64] {
        let h = 1.0 / layers as f64;
        let times: Vec<f64> = (0..layers).map(|m| (m as f64 + 0.5) * h).collect();
        let stat = LayeredStatistic::riemann(
            |t| {
                if t < 0.5 {
                    Polynomial::monomial(vec![0.0, 1.0])
                } else {
                    Polynomial::monomial(vec![0.0, 0.0, 1.0])
                }
            },
            times.clone(),
            (0.0, 1.0),
        )
        .unwrap();
        let req = hermite_request(n, &times, stat.layers, 2);
        match composition_series_c2(&req) {
            Ok(c2) => errs.push((c2 - exact).abs()),
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    let last = *errs.last().unwrap();
    outcome(
        last < 3e-2,
        format!("limit {exact:.5}; errors at N = 4, 16, 64: {}", sci(&errs)),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("Toeplitz variance convergence", toeplitz_variance_convergence),
        ("two-time CLT", two_time_clt),
        ("comparison principle", comparison_principle),
        ("determinant identity oracle", determinant_identity_oracle),
        ("Ehrhardt identity", ehrhardt_identity),
        ("Hankel trace identity", hankel_trace_identity),
        ("Monte Carlo CLT", monte_carlo_clt),
        ("GFF identity", gff_identity),
        ("ensemble limits", ensemble_limits),
        ("growing-N variant", growing_variant),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| *f == id || name.contains(f.as_str())) {
            continue;
        }
        let o = run();
        if !o.pass {
            failures += 1;
        }
        println!(
            "criterion {id:>2} [{}] {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
