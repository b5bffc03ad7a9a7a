//! Acceptance suite: one test per release criterion, so the harness prints
//! one pass/fail line for each. Two clauses are documented gaps and are left
//! failing on purpose (see the test bodies): a positivity-failure witness
//! does not exist for the chart-exact forms this library implements, and the
//! proper-model volume fraction at |z| = 1e-4 sits near 0.78, not above 0.9.

use std::collections::BTreeSet;

use lagfib::base::{build_expanded, IvyChoice};
use lagfib::diagnostics::{
    calibration_ratio, gh_distortion, hesse_volume_ratio, phase_specialty, volume_fraction, Sweep,
};
use lagfib::dual_complex::{
    classify_faces, essential_set, essential_skeleton, models, pseudomanifold_check, Face,
    FaceClass,
};
use lagfib::flow::{
    lagrangian_residual, monodromy_field, radius_zero_fiber, symplectic_lift, transport,
    AdmissiblePath, LiftDirection, QSchedule,
};
use lagfib::hybrid::{ChartId, HybridPoint, Model};
use lagfib::kahler::{
    calibrate_eps0, cplus, ddc_sharp_check, metric_g, omega_q, pairing_check, potential_flat,
    restrict_form, torus_basis, FormParams,
};

fn face(ids: &[u32]) -> Face {
    ids.iter().copied().collect()
}

fn snc1() -> Model {
    Model::local_snc(1, vec![1, 1], vec![1, 1]).unwrap()
}

fn snc2() -> Model {
    Model::local_snc(2, vec![1, 1, 1], vec![1, 1, 1]).unwrap()
}

/// Interior base weights for a chart with `k` coordinates.
fn interior_bases(k: usize) -> Vec<Vec<f64>> {
    if k == 2 {
        vec![vec![0.2, 0.8], vec![0.5, 0.5], vec![0.8, 0.2]]
    } else {
        vec![
            vec![0.2, 0.3, 0.5],
            vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            vec![0.5, 0.3, 0.2],
        ]
    }
}

// ---------------------------------------------------------------------------
// 1. Essential-skeleton combinatorics
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_essential_skeleton_combinatorics() {
    let start = std::time::Instant::now();

    // Triangle of lines: all three components essential, triangle skeleton.
    let hesse = models::hesse();
    let essential = essential_set(&hesse).unwrap();
    assert_eq!(essential, [1, 2, 3].into_iter().collect::<BTreeSet<u32>>());
    let sk = essential_skeleton(&hesse).unwrap();
    let maximal: Vec<Face> = classify_faces(&sk)
        .into_iter()
        .filter(|(_, c)| *c == FaceClass::Maximal)
        .map(|(f, _)| f)
        .collect();
    assert_eq!(maximal, vec![face(&[1, 2]), face(&[1, 3]), face(&[2, 3])]);
    assert!(pseudomanifold_check(&sk).verdict);

    // Blowup at a smooth point: the exceptional component (ν/m = 2) is not
    // essential and the skeleton stays a triangle.
    let smooth = models::hesse_blowup_smooth_point();
    let essential = essential_set(&smooth).unwrap();
    assert!(!essential.contains(&4), "exceptional component included");
    assert_eq!(essential.len(), 3);
    let sk = essential_skeleton(&smooth).unwrap();
    assert_eq!(sk.faces.iter().filter(|f| f.len() == 2).count(), 3);
    assert!(pseudomanifold_check(&sk).verdict);

    // Blowup at a node: the exceptional component (ν/m = 1) is essential and
    // subdivides an edge, giving a square.
    let node = models::hesse_blowup_node();
    let essential = essential_set(&node).unwrap();
    assert!(essential.contains(&4), "essential exceptional excluded");
    assert_eq!(essential.len(), 4);
    let sk = essential_skeleton(&node).unwrap();
    let edges: Vec<Face> = classify_faces(&sk)
        .into_iter()
        .filter(|(_, c)| *c == FaceClass::Maximal)
        .map(|(f, _)| f)
        .collect();
    assert_eq!(
        edges,
        vec![face(&[1, 3]), face(&[1, 4]), face(&[2, 3]), face(&[2, 4])]
    );
    assert!(pseudomanifold_check(&sk).verdict);

    assert!(start.elapsed().as_secs_f64() < 1.0, "budget exceeded");
}

// ---------------------------------------------------------------------------
// 2. Expanded skeleton of the triangle model
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_expanded_skeleton_is_a_six_cell_circle() {
    let start = std::time::Instant::now();
    let sk = essential_skeleton(&models::hesse()).unwrap();
    let expanded = build_expanded(&sk, &IvyChoice::default()).unwrap();
    assert_eq!(expanded.cells.len(), 6, "cells");
    assert_eq!(expanded.gluings.len(), 6, "gluings");
    assert!(expanded.ram().is_empty(), "ramification points");
    assert!(expanded.outer_boundary().is_empty(), "outer boundary");
    // A circle: as many gluings as cells.
    assert_eq!(expanded.euler_characteristic(), 0);
    assert!(start.elapsed().as_secs_f64() < 1.0, "budget exceeded");
}

// ---------------------------------------------------------------------------
// 3. Radius-zero fibers are isotropic
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_form_family_vanishes_on_sampled_torus_fibers() {
    let start = std::time::Instant::now();
    for model in [snc1(), snc2()] {
        let chart = model.maximal_charts()[0];
        let k = model.n() + 1;
        for base in interior_bases(k) {
            let fiber = radius_zero_fiber(&model, chart, &base, 0.2, 8).unwrap();
            for p in &fiber.samples {
                let torus = torus_basis(&model, p).unwrap();
                for &q in &[0.0, 0.25, 0.5, 0.75, 1.0] {
                    let form = omega_q(&model, p, FormParams::new(0.4, q).unwrap()).unwrap();
                    let residual = restrict_form(&form, &torus).amax();
                    assert!(
                        residual < 1e-12,
                        "pullback residual {residual:.3e} at n={} base={base:?} q={q}",
                        model.n()
                    );
                }
            }
        }
    }
    assert!(start.elapsed().as_secs_f64() < 10.0, "budget exceeded");
}

// ---------------------------------------------------------------------------
// 4. The boundary pairing identity
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_pairing_identity_on_a_twenty_point_grid() {
    let model = snc1();
    for i in 0..20 {
        let x = 0.04 + 0.92 * i as f64 / 19.0;
        let p = HybridPoint::in_maximal_chart(
            &model,
            ChartId::LocalSnc,
            0.0,
            &[x, 1.0 - x],
            &[0.3, 0.3],
        )
        .unwrap();
        for &q in &[0.0, 0.3, 0.7, 1.0] {
            let residual = pairing_check(&model, &p, FormParams::new(0.6, q).unwrap()).unwrap();
            assert!(
                residual < 1e-12,
                "pairing residual {residual:.3e} at w=({x},..) q={q}"
            );
        }
    }
}

// ---------------------------------------------------------------------------
// 5. Fiber-metric positivity
// ---------------------------------------------------------------------------

#[test]
fn criterion_05a_metric_positive_definite_at_calibrated_eps() {
    let start = std::time::Instant::now();
    for model in [snc1(), snc2(), Model::hesse()] {
        let calibration = calibrate_eps0(&model).unwrap();
        let eps = calibration.eps0;
        let chart = model.maximal_charts()[0];
        let info = model.chart(chart).unwrap();
        let k = info.k();
        for &t in &[1e-3, 0.01, 0.05, 0.1] {
            for base in interior_bases(k) {
                let p =
                    HybridPoint::in_maximal_chart(&model, chart, t, &base, &vec![0.3; k]).unwrap();
                for &q in &[0.0, 0.25, 0.5, 0.75, 1.0] {
                    let rep = metric_g(&model, &p, FormParams::new(eps, q).unwrap()).unwrap();
                    assert!(
                        rep.min_eigenvalue > 0.0,
                        "min eigenvalue {:.3e} at t={t} q={q} base={base:?}",
                        rep.min_eigenvalue
                    );
                }
            }
        }
    }
    assert!(start.elapsed().as_secs_f64() < 60.0, "budget exceeded");
}

#[test]
fn criterion_05b_recorded_positivity_failure_witness() {
    // Documented gap, left failing on purpose: on fiber tangents the
    // chart-exact ω♯ and ω♭ reduce to positive-diagonal Gram forms for every
    // ε > 0, so no failing ε exists for these models. The calibration scan
    // reports that honestly instead of fabricating a witness.
    let calibration = calibrate_eps0(&snc1()).unwrap();
    assert!(
        calibration.failing_eps.is_some(),
        "no positivity failure exists below the scan cap; eps0 falls back to {} \
         (fiber positivity holds for all eps in the chart-exact forms)",
        calibration.eps0
    );
}

// ---------------------------------------------------------------------------
// 6. Potential identities
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_potentials_match_their_forms() {
    let start = std::time::Instant::now();
    for model in [snc1(), snc2()] {
        let chart = model.maximal_charts()[0];
        let k = model.n() + 1;
        for base in interior_bases(k) {
            let p =
                HybridPoint::in_maximal_chart(&model, chart, 0.08, &base, &vec![0.2; k]).unwrap();
            let ddc = ddc_sharp_check(&model, &p, 1e-4).unwrap();
            assert!(ddc < 1e-5, "dd^c mismatch {ddc:.3e} at base={base:?}");
            let (_, flat_residual) = potential_flat(&model, &p).unwrap();
            assert!(
                flat_residual < 1e-6,
                "flat potential residual {flat_residual:.3e} at base={base:?}"
            );
        }
    }
    assert!(start.elapsed().as_secs_f64() < 30.0, "budget exceeded");
}

// ---------------------------------------------------------------------------
// 7. Symplectic transport
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_transport_order_invariants_and_monodromy() {
    let start = std::time::Instant::now();

    // Fourth-order decay under step halving.
    let model = snc1();
    let fiber = radius_zero_fiber(&model, ChartId::LocalSnc, &[0.35, 0.65], 0.0, 1).unwrap();
    let path = AdmissiblePath::new(0.0, QSchedule::Square);
    let endpoint = |steps: usize| {
        let moved = transport(&model, &fiber, &path, 0.8, 0.05, steps).unwrap();
        (moved.samples[0].w[0], moved.samples[0].angles[0])
    };
    let reference = endpoint(512);
    let err = |steps: usize| {
        let (w, th) = endpoint(steps);
        (w - reference.0).abs().max((th - reference.1).abs())
    };
    let (e4, e8, e16) = (err(4), err(8), err(16));
    for (ratio, label) in [(e4 / e8, "4→8"), (e8 / e16, "8→16")] {
        assert!(
            ratio > 10.0 && ratio < 26.0,
            "halving ratio {label} is {ratio:.2}, not ≈16"
        );
    }

    // Production-size transport: 32² samples, 64 steps, Lagrangian residual
    // below 1e-5 and the radius/simplex invariants to 1e-8 (|f| = e^(-1/t)
    // is a function of the radius coordinate alone).
    let model2 = snc2();
    let chart2 = model2.maximal_charts()[0];
    let fiber2 = radius_zero_fiber(&model2, chart2, &[0.3, 0.3, 0.4], 0.0, 32).unwrap();
    let h = 0.05;
    let moved = transport(&model2, &fiber2, &path, 0.5, h, 64).unwrap();
    assert!(!moved.escaped);
    let fp = FormParams::new(0.5, path.q.value(h)).unwrap();
    let residual = lagrangian_residual(&model2, &moved, fp).unwrap();
    assert!(residual < 1e-5, "Lagrangian residual {residual:.3e}");
    let mut invariant: f64 = 0.0;
    for p in &moved.samples {
        invariant = invariant.max((p.t - h).abs());
        invariant = invariant.max((p.w.iter().sum::<f64>() - 1.0).abs());
    }
    assert!(invariant < 1e-8, "radius invariant drift {invariant:.3e}");

    // The q = 1, t = 0 angular lift matches the closed-form monodromy field.
    let p = HybridPoint::in_maximal_chart(&model, ChartId::LocalSnc, 0.0, &[0.3, 0.7], &[0.4, 0.1])
        .unwrap();
    let lift = symplectic_lift(
        &model,
        &p,
        FormParams::new(0.7, 1.0).unwrap(),
        LiftDirection {
            dt: 0.0,
            dtheta: 1.0,
        },
    )
    .unwrap();
    let closed = monodromy_field(&model, &p).unwrap();
    let k = 2;
    for i in 0..k {
        let got = lift.vector[k + 1 + i];
        assert!(
            (got - closed[i]).abs() < 1e-10,
            "monodromy component {i}: {got} vs {}",
            closed[i]
        );
    }

    assert!(start.elapsed().as_secs_f64() < 120.0, "budget exceeded");
}

// ---------------------------------------------------------------------------
// 8. The constant c₊ at radius zero
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_cplus_is_the_exact_flat_constant() {
    let start = std::time::Instant::now();
    let eps = 0.25;
    for (model, target) in [(snc1(), 2.0 * eps), (snc2(), 3.0 * eps * eps)] {
        let chart = model.maximal_charts()[0];
        let k = model.n() + 1;
        let fp = FormParams::new(eps, 0.0).unwrap();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for base in interior_bases(k) {
            let fiber = radius_zero_fiber(&model, chart, &base, 0.1, 6).unwrap();
            for p in &fiber.samples {
                let c = cplus(&model, p, fp).unwrap();
                lo = lo.min(c);
                hi = hi.max(c);
            }
        }
        assert!(hi - lo < 1e-10, "spread {:.3e} at n={}", hi - lo, model.n());
        assert!(
            (lo - target).abs() < 1e-12 && (hi - target).abs() < 1e-12,
            "c+ = [{lo}, {hi}] vs target {target} at n={}",
            model.n()
        );
    }
    assert!(start.elapsed().as_secs_f64() < 10.0, "budget exceeded");
}

// ---------------------------------------------------------------------------
// 9. Metric-measure collapse: distortion bands
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_distortion_decreases_within_the_band() {
    let start = std::time::Instant::now();
    let model = snc1();
    let path = AdmissiblePath::new(0.0, QSchedule::Proportional); // q(h) = h
    let sweep = Sweep::geometric(path, 1e-1, 1e-4, 4).unwrap();
    let records = gh_distortion(&model, &sweep, 0.25, 32).unwrap();
    assert_eq!(records.len(), 4);
    for pair in records.windows(2) {
        assert!(
            pair[1].max_distortion < pair[0].max_distortion,
            "distortion not decreasing: {} then {}",
            pair[0].max_distortion,
            pair[1].max_distortion
        );
    }
    for r in &records {
        assert!(
            r.lower_violation < 1e-9 && r.upper_violation < 1e-9,
            "band violated at h={}: lower {:.3e}, upper {:.3e}",
            r.h,
            r.lower_violation,
            r.upper_violation
        );
    }
    let last = records.last().unwrap();
    assert!(
        last.max_distortion < 0.05,
        "final distortion {} at h={}",
        last.max_distortion,
        last.h
    );
    assert!(start.elapsed().as_secs_f64() < 300.0, "budget exceeded");
}

// ---------------------------------------------------------------------------
// 10. Volume filling on the proper model
// ---------------------------------------------------------------------------

#[test]
fn criterion_10a_volume_fraction_increases_and_is_one_at_radius_zero() {
    let start = std::time::Instant::now();
    let model = Model::hesse();
    let path = AdmissiblePath::new(0.0, QSchedule::Square);
    let sweep = Sweep::geometric(path, 0.1086, 0.02, 5).unwrap();
    let records = volume_fraction(&model, &sweep, 0.25).unwrap();
    for pair in records.windows(2) {
        assert!(
            pair[1].ratio > pair[0].ratio,
            "volume fraction not increasing: {} then {}",
            pair[0].ratio,
            pair[1].ratio
        );
    }
    let at_zero = hesse_volume_ratio(&model, 0.0, 0.0).unwrap();
    assert_eq!(at_zero, 1.0, "radius-zero fraction must be exactly one");
    assert!(start.elapsed().as_secs_f64() < 300.0, "budget exceeded");
}

#[test]
fn criterion_10b_volume_fraction_above_ninety_percent_near_the_limit() {
    // Documented gap, left failing on purpose: at |z| = 1e-4 the radius is
    // t = -1/ln|z| ≈ 0.1086, and the measured generic-region fraction there
    // is ≈ 0.78. The 0.9 target is only reached around t ≈ 0.04 (|z|≈1e-11).
    let model = Model::hesse();
    let h = -1.0 / (1e-4f64).ln();
    let path = AdmissiblePath::new(0.0, QSchedule::Square);
    let sweep = Sweep::new(path, vec![h]).unwrap();
    let record = &volume_fraction(&model, &sweep, 0.25).unwrap()[0];
    assert!(
        record.ratio > 0.9,
        "volume fraction at |z|=1e-4 (h={h:.4}) is {:.4}, not > 0.9",
        record.ratio
    );
}

// ---------------------------------------------------------------------------
// 11. Phase specialty and calibration along a tame path
// ---------------------------------------------------------------------------

#[test]
fn criterion_11_phases_special_windings_zero_calibrated() {
    let start = std::time::Instant::now();
    let model = snc1();
    let path = AdmissiblePath::new(0.0, QSchedule::Square); // t = h, q = h²
    let sweep = Sweep::geometric(path, 1e-1, 1e-3, 5).unwrap();
    let base = [0.4, 0.6];

    let report = phase_specialty(&model, &sweep, 0.25, &base, 24).unwrap();
    // The limit phase is ±i.
    assert!(
        report.pinned[0].abs() < 1e-12 && (report.pinned[1].abs() - 1.0).abs() < 1e-12,
        "pinned reference {:?} is not ±i",
        report.pinned
    );
    for pair in report.records.windows(2) {
        assert!(
            pair[1].sup_deviation <= pair[0].sup_deviation + 1e-12,
            "sup deviation not decreasing: {} then {}",
            pair[0].sup_deviation,
            pair[1].sup_deviation
        );
    }
    let last = report.records.last().unwrap();
    assert!(
        last.h <= 1e-3 * (1.0 + 1e-9) && last.sup_deviation < 0.1,
        "sup {last:?}"
    );
    for r in &report.records {
        assert_eq!(r.winding, 0, "winding at h={}", r.h);
    }

    let ratios = calibration_ratio(&model, &sweep, 0.25, &base, 24).unwrap();
    for r in &ratios {
        assert!(
            r.ratio >= 1.0 - 1e-3 && r.ratio <= 1.05,
            "calibration ratio {} out of band at h={}",
            r.ratio,
            r.h
        );
    }
    let first_dev = (ratios.first().unwrap().ratio - 1.0).abs();
    let last_dev = (ratios.last().unwrap().ratio - 1.0).abs();
    assert!(
        last_dev <= first_dev + 1e-9,
        "ratio not trending to one: {first_dev:.3e} then {last_dev:.3e}"
    );
    assert!(start.elapsed().as_secs_f64() < 300.0, "budget exceeded");
}
