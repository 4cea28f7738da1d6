//! Large-time behaviour of extremal controls: decay of `B`-paired averages,
//! kernel membership of blowdown controls, and affinity detection.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::algebra::HorizontalVector;
use crate::control::{dilate_control, ControlSignal};
use crate::error::{check_dim, check_positive, Error, Result};
use crate::linalg;
use crate::pmp::BForm;

/// Number of dyadic refinement levels used by [`kernel_membership_check`] by default.
pub const DEFAULT_DYADIC_LEVELS: u32 = 2;

/// Relative tolerance of [`affinity_detector`] when none is given, scaled by `sup |u|`.
pub const DEFAULT_AFFINITY_REL_TOL: f64 = 1e-6;

/// The geometric ladder `start · 2^k`, `k = 0..count`.
pub fn dyadic_ladder(start: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start * (1u64 << k) as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayProfile {
    /// `(T, |B(⨍₀ᵀ u, X)|)` for increasing `T`.
    pub points: Vec<(f64, f64)>,
    pub probe: HorizontalVector,
    /// `max_T value · T`.
    pub fitted_c: f64,
}

impl DecayProfile {
    /// Largest `value(T) − c/T` over the ladder; non-positive iff `value ≤ c/T` everywhere.
    pub fn max_excess(&self, c: f64) -> f64 {
        self.points
            .iter()
            .map(|(t, v)| v - c / t)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `|B(⨍₀ᵀ u, X)|` along `t_ladder`, computed from exact cell integrals.
pub fn average_decay_profile(
    u: &ControlSignal,
    form: &BForm,
    probe: &[f64],
    t_ladder: &[f64],
) -> Result<DecayProfile> {
    check_dim("control dimension", form.dim(), u.dim())?;
    check_dim("probe dimension", form.dim(), probe.len())?;
    let bx = form.act_right(probe);
    let mut points = Vec::with_capacity(t_ladder.len());
    let mut prev = 0.0;
    for &t in t_ladder {
        check_positive("ladder time", t)?;
        if t <= prev {
            return Err(Error::InvalidControl(format!(
                "ladder must be strictly increasing, got {t} after {prev}"
            )));
        }
        prev = t;
        let avg = u.average(0.0, t)?;
        points.push((t, linalg::dot(&avg, &bx).abs()));
    }
    let fitted_c = points.iter().map(|(t, v)| t * v).fold(0.0, f64::max);
    Ok(DecayProfile {
        points,
        probe: HorizontalVector(probe.to_vec()),
        fitted_c,
    })
}

/// `⨍_{aλ}^{bλ} u` rebuilt from the two prefix averages
/// `b/(b−a) ⨍₀^{bλ} u − a/(b−a) ⨍₀^{aλ} u`.
pub fn window_average_from_prefixes(u: &ControlSignal, a: f64, b: f64, lambda: f64) -> Result<HorizontalVector> {
    check_positive("dilation factor", lambda)?;
    if !(a > 0.0 && b > a) {
        return Err(Error::InvalidWindow {
            t0: a,
            t1: b,
            limit: u.duration(),
        });
    }
    let long = u.average(0.0, b * lambda)?;
    let short = u.average(0.0, a * lambda)?;
    let (wb, wa) = (b / (b - a), a / (b - a));
    Ok(HorizontalVector(
        long.iter().zip(short.iter()).map(|(l, s)| wb * l - wa * s).collect(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelCheck {
    /// `(λ, max over dyadic subwindows of |B(avg u_λ, ·)|)`.
    pub entries: Vec<(f64, f64)>,
    pub window: f64,
    pub levels: u32,
    pub tol: f64,
    /// Values never increase along the ladder.
    pub monotone: bool,
    /// Monotone and below `tol` at the largest `λ`.
    pub consistent: bool,
    pub verdict: String,
}

/// Averages of the blowdowns `u_λ(t) = u(λt)` over the dyadic subwindows of
/// `[0, window]` (levels `0..=levels`), paired through `B`.
///
/// A sampled ladder can only show the trend, so the verdict speaks of evidence.
pub fn kernel_membership_check(
    u: &ControlSignal,
    form: &BForm,
    lambdas: &[f64],
    window: f64,
    levels: u32,
    tol: f64,
) -> Result<KernelCheck> {
    check_dim("control dimension", form.dim(), u.dim())?;
    check_positive("window", window)?;
    let mut entries = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        check_positive("dilation factor", l)?;
        let scaled = dilate_control(u, l)?;
        let mut worst = 0.0f64;
        for level in 0..=levels {
            let parts = 1usize << level;
            let w = window / parts as f64;
            for p in 0..parts {
                let avg = scaled.average(p as f64 * w, (p + 1) as f64 * w)?;
                worst = worst.max(linalg::norm2(&form.pair_left(&avg)));
            }
        }
        entries.push((l, worst));
    }
    let monotone = entries.windows(2).all(|w| w[1].1 <= w[0].1);
    let last = entries.last().map_or(0.0, |e| e.1);
    let consistent = monotone && last < tol;
    let verdict = if consistent {
        format!("evidence of kernel membership: |B avg| = {last:e} < {tol:e} and non-increasing")
    } else if !monotone {
        String::from("no evidence: |B avg| is not monotone along the ladder")
    } else {
        format!("no evidence: |B avg| = {last:e} stays above {tol:e}")
    };
    Ok(KernelCheck {
        entries,
        window,
        levels,
        tol,
        monotone,
        consistent,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Affinity {
    pub is_affine: bool,
    /// Mean control.
    pub direction: HorizontalVector,
    /// `max_k |u_k − mean|`.
    pub oscillation: f64,
    pub tol: f64,
}

/// Whether `u` is constant up to `tol` (default `1e−6 · sup |u|`).
pub fn affinity_detector(u: &ControlSignal, tol: Option<f64>) -> Affinity {
    let direction = u.mean();
    let oscillation = u
        .samples()
        .map(|s| {
            let d: Vec<f64> = s.iter().zip(direction.iter()).map(|(a, b)| a - b).collect();
            linalg::norm2(&d)
        })
        .fold(0.0, f64::max);
    let tol = tol.unwrap_or_else(|| {
        DEFAULT_AFFINITY_REL_TOL * u.samples().map(linalg::norm2).fold(0.0, f64::max)
    });
    Affinity {
        is_affine: oscillation <= tol,
        direction,
        oscillation,
        tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::StepTwoAlgebra;
    use crate::pmp::build_b;
    use approx::assert_abs_diff_eq;
    use core::f64::consts::PI;

    fn circle(dt: f64, count: usize) -> ControlSignal {
        ControlSignal::from_fn(dt, count, 2, |t| alloc::vec![t.cos(), t.sin()]).unwrap()
    }

    fn h1_form(b: f64) -> BForm {
        build_b(&StepTwoAlgebra::heisenberg(1).unwrap(), &[b]).unwrap()
    }

    #[test]
    fn kernel_direction_never_decays_away_from_zero() {
        let f3 = StepTwoAlgebra::free_step_two(3).unwrap();
        let form = build_b(&f3, &[1.0, 0.0, 0.0]).unwrap();
        let u = ControlSignal::constant(0.1, 700, &[0.0, 0.0, 1.0]).unwrap();
        let prof = average_decay_profile(&u, &form, &[1.0, 0.0, 0.0], &dyadic_ladder(1.0, 7)).unwrap();
        assert!(prof.points.iter().all(|p| p.1 == 0.0));
        assert_eq!(prof.fitted_c, 0.0);
    }

    #[test]
    fn circle_decay_matches_closed_form() {
        let dt = 1e-4;
        let u = circle(dt, 640_000);
        let ladder = dyadic_ladder(1.0, 7);
        let prof = average_decay_profile(&u, &h1_form(1.0), &[1.0, 0.0], &ladder).unwrap();
        for (t, v) in &prof.points {
            // left-endpoint sampling shifts the phase by dt/2
            let exact = (1.0 - t.cos()) / t;
            assert_abs_diff_eq!(*v, exact, epsilon = 2.0 * dt);
            assert!(*v <= 2.0 / t + 1e-9);
        }
        assert!(prof.fitted_c <= 2.0 + 1e-6);
        assert!(prof.max_excess(2.0) <= 1e-6);
    }

    #[test]
    fn decay_rejects_bad_ladders() {
        let u = circle(0.01, 100);
        let f = h1_form(1.0);
        assert!(average_decay_profile(&u, &f, &[1.0, 0.0], &[0.5, 2.0]).is_err());
        assert!(average_decay_profile(&u, &f, &[1.0, 0.0], &[0.5, 0.25]).is_err());
        assert!(average_decay_profile(&u, &f, &[1.0], &[0.5]).is_err());
    }

    #[test]
    fn prefix_identity_is_exact_on_cells() {
        let u = ControlSignal::from_fn(0.01, 5000, 2, |t| alloc::vec![(3.0 * t).sin(), t.cos() + 0.2]).unwrap();
        for (a, b, l) in [(0.25, 0.5, 4.0), (0.1, 1.0, 30.0), (0.333, 0.77, 11.0)] {
            let direct = u.average(a * l, b * l).unwrap();
            let via = window_average_from_prefixes(&u, a, b, l).unwrap();
            for i in 0..2 {
                assert_abs_diff_eq!(direct[i], via[i], epsilon = 1e-12);
            }
        }
        assert!(window_average_from_prefixes(&u, 0.5, 0.25, 1.0).is_err());
    }

    #[test]
    fn circle_kernel_evidence() {
        let u = circle(1e-3, 1 << 20);
        let ladder = dyadic_ladder(1.0, 11);
        let rep = kernel_membership_check(&u, &h1_form(1.0), &ladder, 1.0, DEFAULT_DYADIC_LEVELS, 1e-2).unwrap();
        assert!(rep.monotone, "{:?}", rep.entries);
        assert!(rep.entries.last().unwrap().1 < 1e-2);
        assert!(rep.consistent);
        assert!(rep.verdict.starts_with("evidence"));
    }

    #[test]
    fn constant_controls_and_kernel() {
        let f = h1_form(1.0);
        let ladder = dyadic_ladder(1.0, 4);
        let u = ControlSignal::constant(0.01, 1000, &[1.0, 0.0]).unwrap();
        let rep = kernel_membership_check(&u, &f, &ladder, 1.0, 2, 1e-2).unwrap();
        assert!(rep.entries.iter().all(|e| (e.1 - 1.0).abs() < 1e-12));
        assert!(!rep.consistent);

        let zero = h1_form(0.0);
        let rep = kernel_membership_check(&u, &zero, &ladder, 1.0, 2, 1e-2).unwrap();
        assert!(rep.entries.iter().all(|e| e.1 == 0.0));
        assert!(rep.consistent);

        assert!(kernel_membership_check(&u, &f, &[20.0], 1.0, 2, 1e-2).is_err());
    }

    #[test]
    fn affinity_examples() {
        let c = ControlSignal::constant(0.1, 50, &[0.6, -0.8]).unwrap();
        let a = affinity_detector(&c, None);
        assert!(a.is_affine);
        assert_abs_diff_eq!(a.direction[0], 0.6, epsilon = 1e-12);

        let n = 4000;
        let circ = circle(2.0 * PI / n as f64, n);
        let a = affinity_detector(&circ, None);
        assert!(!a.is_affine);
        assert!(a.direction.iter().all(|d| d.abs() < 1e-9));
        assert_abs_diff_eq!(a.oscillation, 1.0, epsilon = 1e-9);

        let sine = ControlSignal::from_fn(4.0 * PI / n as f64, n, 2, |t| alloc::vec![1.0, t.cos()]).unwrap();
        let a = affinity_detector(&sine, None);
        assert!(!a.is_affine);
        assert_abs_diff_eq!(a.direction[0], 1.0, epsilon = 1e-12);
        assert!(a.direction[1].abs() < 1e-9);
    }
}
