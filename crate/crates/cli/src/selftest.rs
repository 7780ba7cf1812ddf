//! `tosqap selftest`: fast invariant checks, one pass/fail line per group.

use std::str::FromStr;

use itertools::Itertools;
use tosqap::lap::{solve_lap_min, Permutation};
use tosqap::oracles::SquaredDistance;
use tosqap::prox::{ConvexSet, FrobeniusNorm, Indicator, L1Norm, ProxOperator, Zero};
use tosqap::qap::{qap_gradient, qap_objective, QapInstance};
use tosqap::tos::{
    certificate_residual, run_tos_observed, CertificateValues, CompositeProblem, IterationView, Observer,
    SolverConfig, StepPolicy, TraceSchedule,
};
use tosqap::{Matrix, RngState};

/// Deliberate corruption for checking that the selftest can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Swap two rows of every assignment returned by the LAP solver.
    Lap,
}

impl FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lap" => Ok(Fault::Lap),
            other => Err(format!("unknown fault {other:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroupResult {
    pub group: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl GroupResult {
    pub fn line(&self) -> String {
        format!(
            "{} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.group,
            self.detail
        )
    }
}

fn prox_characterization() -> GroupResult {
    // <x - P(x), z - P(x)> <= s (g(z) - g(P(x))) for z in dom g
    let operators: Vec<Box<dyn ProxOperator>> = vec![
        Box::new(Indicator(ConvexSet::UNIT_BOX)),
        Box::new(Indicator(ConvexSet::RowStochastic)),
        Box::new(Indicator(ConvexSet::ColumnStochastic)),
        Box::new(Indicator(ConvexSet::AffineDoublyStochastic)),
        Box::new(L1Norm { weight: 0.8 }),
        Box::new(FrobeniusNorm { weight: 1.7 }),
        Box::new(Zero),
    ];
    let mut rng = RngState::new(2024);
    let mut worst = f64::NEG_INFINITY;
    let mut checks = 0;
    for op in &operators {
        for _ in 0..50 {
            let n = 2 + (rng.next_u64() % 5) as usize;
            let scale = 0.1 + 2.0 * rng.uniform();
            let x = rng.gaussian_matrix(n, n).scaled(2.0);
            let z = op.prox(&rng.gaussian_matrix(n, n).scaled(2.0), 1.0).unwrap();
            let p = op.prox(&x, scale).unwrap();
            let lhs = (&x - &p).inner(&(&z - &p)).unwrap();
            let rhs = scale * (op.value(&z) - op.value(&p));
            worst = worst.max(lhs - rhs);
            checks += 1;
        }
    }
    GroupResult {
        group: "prox-characterization",
        passed: worst <= 1e-9,
        detail: format!("{checks} checks, worst slack {worst:.3e}"),
    }
}

struct Certificates {
    reference: Matrix,
    worst: f64,
}

impl Observer for Certificates {
    fn on_iteration(&mut self, view: &IterationView<'_>) {
        let g = Indicator(ConvexSet::UNIT_BOX);
        let h = Indicator(ConvexSet::AffineDoublyStochastic);
        let values = CertificateValues {
            g_z: g.value(view.z),
            g_ref: g.value(&self.reference),
            h_x: h.value(view.x),
            h_ref: h.value(&self.reference),
        };
        let r = certificate_residual(view, &self.reference, values).unwrap();
        self.worst = self.worst.max(r);
    }
}

fn certificate_nonpositivity() -> GroupResult {
    let mut rng = RngState::new(7);
    let n = 5;
    let f = SquaredDistance {
        center: rng.gaussian_matrix(n, n),
    };
    let g = Indicator(ConvexSet::UNIT_BOX);
    let h = Indicator(ConvexSet::AffineDoublyStochastic);
    let problem = CompositeProblem::new(&f, &g, &h, (n, n));
    let cfg = SolverConfig::new(500, StepPolicy::Fixed(0.3)).with_trace(TraceSchedule::Never);
    let mut obs = Certificates {
        reference: Matrix::filled(n, n, 1.0 / n as f64),
        worst: f64::NEG_INFINITY,
    };
    let ok = run_tos_observed(&problem, &cfg, &rng.gaussian_matrix(n, n), &mut obs).is_ok();
    GroupResult {
        group: "certificate-nonpositivity",
        passed: ok && obs.worst <= 1e-9,
        detail: format!("500 iterations, max residual {:.3e}", obs.worst),
    }
}

fn lap_enumeration(fault: Option<Fault>) -> GroupResult {
    let mut rng = RngState::new(99);
    let mut mismatches = 0;
    let mut trials = 0;
    for n in 1..=6 {
        for _ in 0..20 {
            let c = rng.uniform_matrix(n, n, -5.0, 5.0);
            let brute = (0..n)
                .permutations(n)
                .map(|p| p.iter().enumerate().map(|(i, &j)| c[(i, j)]).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            let (mut p, _) = solve_lap_min(&c).unwrap();
            if fault == Some(Fault::Lap) && n > 1 {
                let mut m = p.as_slice().to_vec();
                m.swap(0, 1);
                p = Permutation::new(m).unwrap();
            }
            let value: f64 = p.as_slice().iter().enumerate().map(|(i, &j)| c[(i, j)]).sum();
            if value != brute {
                mismatches += 1;
            }
            trials += 1;
        }
    }
    GroupResult {
        group: "lap-enumeration",
        passed: mismatches == 0,
        detail: format!("{trials} instances, {mismatches} mismatches"),
    }
}

fn gradient_finite_differences() -> GroupResult {
    let mut rng = RngState::new(5);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let n = 4;
        let inst = QapInstance::new("fd", rng.gaussian_matrix(n, n), rng.gaussian_matrix(n, n)).unwrap();
        let x = rng.gaussian_matrix(n, n);
        let grad = qap_gradient(&inst, &x).unwrap();
        let mut fd = Matrix::zeros(n, n);
        for k in 0..n * n {
            let mut xp = x.clone();
            xp.as_mut_slice()[k] += h;
            let mut xm = x.clone();
            xm.as_mut_slice()[k] -= h;
            fd.as_mut_slice()[k] =
                (qap_objective(&inst, &xp).unwrap() - qap_objective(&inst, &xm).unwrap()) / (2.0 * h);
        }
        worst = worst.max((&grad - &fd).norm() / grad.norm());
    }
    GroupResult {
        group: "gradient-finite-differences",
        passed: worst <= 1e-6,
        detail: format!("10 points, worst relative error {worst:.3e}"),
    }
}

pub fn run_selftest(fault: Option<Fault>) -> Vec<GroupResult> {
    vec![
        prox_characterization(),
        certificate_nonpositivity(),
        lap_enumeration(fault),
        gradient_finite_differences(),
    ]
}
