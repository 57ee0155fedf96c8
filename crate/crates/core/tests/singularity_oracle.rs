//! Sampling oracles for the contact-loss geometry.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use omnipipe::kinematics::RobotGeometry;
use omnipipe::singularity::{
    contact_loss_arcs, cross_section_at, ellipse_radial_distance, escape_rotation,
    failure_probability, in_singularity, orientation_forbidden_set, sweep_t_junction, Arc,
    EllipseSection, SingularityRegion,
};

/// Arc endpoints by scanning `n` angles around the major-axis end at 0°.
fn sampled_half_width(e: &EllipseSection, reach: f64, n: usize) -> f64 {
    // contiguous run of out-of-reach samples starting at ψ = 0, scanning up to 90°
    let step = 90.0 / n as f64;
    let mut last = None;
    for k in 0..=n {
        let psi = k as f64 * step;
        if ellipse_radial_distance(e, psi.to_radians()) > reach {
            last = Some(psi);
        } else {
            break;
        }
    }
    last.map_or(0.0, |p| p + step / 2.0)
}

#[test]
fn arcs_match_dense_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let b = rng.gen_range(20.0..150.0);
        let a = b * rng.gen_range(1.01..2.5);
        let reach = rng.gen_range(b * 1.0001..a * 0.9999);
        let e = EllipseSection::new(a, b).unwrap();
        let arcs = contact_loss_arcs(&e, reach).unwrap();
        assert_eq!(arcs.len(), 2);
        let oracle = sampled_half_width(&e, reach, 250_000);
        for arc in &arcs {
            assert!(
                (arc.half_width_deg - oracle).abs() < 0.01,
                "a={a} b={b} reach={reach}: {} vs {oracle}",
                arc.half_width_deg
            );
        }
        assert!((arcs[1].center_deg - arcs[0].center_deg - 180.0).abs() < 1e-12);
    }
}

#[test]
fn worked_case_half_width() {
    let e = EllipseSection::new(100.0, 80.0).unwrap();
    let w = contact_loss_arcs(&e, 90.0).unwrap()[0].half_width_deg;
    assert!((w - 40.23).abs() < 0.01, "{w}");
}

#[test]
fn half_width_monotone_in_reach_and_eccentricity() {
    let b = 80.0;
    let mut prev = f64::INFINITY;
    let e = EllipseSection::new(120.0, b).unwrap();
    for k in 0..200 {
        let reach = b + (120.0 - b) * k as f64 / 200.0;
        let w = contact_loss_arcs(&e, reach).unwrap()[0].half_width_deg;
        assert!(w <= prev + 1e-12);
        prev = w;
    }
    let mut prev = 0.0;
    for k in 1..200 {
        let a = 95.0 + k as f64;
        let w =
            contact_loss_arcs(&EllipseSection::new(a, b).unwrap(), 95.0).unwrap()[0].half_width_deg;
        assert!(w + 1e-12 >= prev);
        prev = w;
    }
}

/// θ₅ forbidden iff some module direction θ₅ + k·120° lies in an arc.
fn oracle_forbidden(theta_deg: f64, arcs: &[Arc]) -> bool {
    (0..3).any(|k| {
        let x = theta_deg + 120.0 * k as f64;
        arcs.iter().any(|a| {
            let d = (x - a.center_deg).rem_euclid(360.0);
            d.min(360.0 - d) <= a.half_width_deg
        })
    })
}

#[test]
fn orientation_set_matches_grid_oracle() {
    let arcs = [
        Arc {
            center_deg: 90.0,
            half_width_deg: 24.0,
        },
        Arc {
            center_deg: 270.0,
            half_width_deg: 24.0,
        },
        Arc {
            center_deg: 10.0,
            half_width_deg: 3.5,
        },
    ];
    let region = orientation_forbidden_set(&arcs);
    let mut forbidden = 0usize;
    let n = 120_000;
    for k in 0..n {
        let theta = k as f64 * 0.001;
        let oracle = oracle_forbidden(theta, &arcs);
        forbidden += oracle as usize;
        // skip samples within grid resolution of a boundary
        let near_edge = [-0.001, 0.001]
            .iter()
            .any(|d| oracle_forbidden(theta + d, &arcs) != oracle);
        if !near_edge {
            assert_eq!(
                region.contains(theta.to_radians()),
                oracle,
                "theta5 = {theta}"
            );
        }
    }
    let measure = forbidden as f64 * 0.001;
    assert!(
        (measure - region.sector_measure_deg).abs() < 0.01,
        "{measure} vs {}",
        region.sector_measure_deg
    );
}

#[test]
fn orientation_set_invariant_under_module_relabel() {
    let geom = RobotGeometry::default();
    let region = sweep_t_junction(160.0, &geom, 45f64.to_radians(), 91).unwrap();
    for k in 0..3600 {
        let t = (k as f64 * 0.1).to_radians();
        let third = 120f64.to_radians();
        assert_eq!(region.contains(t), region.contains(t + third));
        assert_eq!(region.contains(t), region.contains(t - third));
    }
}

#[test]
fn escape_always_lands_free() {
    let geom = RobotGeometry::default();
    let region = sweep_t_junction(160.0, &geom, 45f64.to_radians(), 91).unwrap();
    for k in 0..36_000 {
        let t = (k as f64 * 0.01).to_radians();
        let delta = escape_rotation(t, &region).unwrap();
        assert!(
            !in_singularity(t + delta, &region),
            "theta5 = {}",
            t.to_degrees()
        );
        assert!(delta.to_degrees().abs() <= 30.0 + 1e-9);
    }
}

#[test]
fn escape_from_worst_orientation_matches_grid_search() {
    let geom = RobotGeometry::default();
    let region = sweep_t_junction(160.0, &geom, 45f64.to_radians(), 91).unwrap();
    // free runs on a 0.01° grid over one period, starting inside the forbidden set
    let step = 0.01;
    let n = 12_000;
    let origin = 30.0;
    let free: Vec<bool> = (0..n)
        .map(|k| !region.contains((origin + k as f64 * step).to_radians()))
        .collect();
    assert!(!free[0]);
    let mut centers = Vec::new();
    let mut k = 0;
    while k < n {
        if free[k] {
            let start = k;
            while k < n && free[k] {
                k += 1;
            }
            centers.push(origin + (start + k - 1) as f64 * step / 2.0);
        }
        k += 1;
    }
    let best = centers
        .iter()
        .map(|c| {
            let d = (c - origin).rem_euclid(120.0);
            if d > 60.0 {
                d - 120.0
            } else {
                d
            }
        })
        .fold(f64::INFINITY, |b, d| if d.abs() < b.abs() { d } else { b });
    let delta = escape_rotation(origin.to_radians(), &region)
        .unwrap()
        .to_degrees();
    assert!((delta.abs() - best.abs()).abs() < 0.02, "{delta} vs {best}");
    assert!((delta.abs() - 30.0).abs() < 0.02);
}

#[test]
fn sweep_grows_with_tilt() {
    let geom = RobotGeometry::default();
    let mut prev = SingularityRegion::empty();
    for deg in [10.0, 20.0, 30.0, 38.0, 45.0, 50.0] {
        let region = sweep_t_junction(160.0, &geom, f64::to_radians(deg), 91).unwrap();
        assert!(region.sector_measure_deg + 1e-12 >= prev.sector_measure_deg);
        for k in 0..1200 {
            let t = (k as f64 * 0.1).to_radians();
            if prev.contains(t) {
                assert!(region.contains(t), "tilt {deg}: {}", t.to_degrees());
            }
        }
        prev = region;
    }
}

#[test]
fn failure_probability_bounds() {
    assert_eq!(failure_probability(&SingularityRegion::empty()), 0.0);
    let full = orientation_forbidden_set(&[Arc {
        center_deg: 0.0,
        half_width_deg: 90.0,
    }]);
    assert_eq!(failure_probability(&full), 1.0);
    let mut prev = 0.0;
    for w in 0..60 {
        let r = orientation_forbidden_set(&[Arc {
            center_deg: 90.0,
            half_width_deg: w as f64 * 0.5,
        }]);
        let p = failure_probability(&r);
        assert!(p >= prev);
        prev = p;
    }
}

#[test]
fn flat_section_has_no_arcs() {
    let e = cross_section_at(160.0, 0.0).unwrap();
    assert!(contact_loss_arcs(&e, 80.0).unwrap().is_empty());
    assert!(cross_section_at(160.0, std::f64::consts::FRAC_PI_2).is_err());
}
