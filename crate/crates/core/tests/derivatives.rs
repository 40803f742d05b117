use fluence_core::inverse::{estimate_with_derivs, payloads, slot, voxels_of, DescentOpts};
use fluence_core::ray::sample_ray;
use fluence_core::stats::mean_var;
use fluence_core::{
    hybrid_descent, Measurements, OpticalParams, Purpose, Scenario, SomeSizes, SourceSpec, StreamFamily, Vec3,
    VoxelGrid,
};
use statrs::function::gamma::gamma_lr;

fn scenario(mu_s: f64, mu_a: f64) -> Scenario<f64> {
    Scenario::new(
        OpticalParams::new(mu_s, mu_a, 0.9).unwrap(),
        SourceSpec::new(std::f64::consts::PI / 10.0, 1.0).unwrap(),
        VoxelGrid::new(0.04, 25).unwrap(),
    )
}

/// `scale * E[1{N = n, A < t}]` in closed form:
/// `c (1 - cos a) / 2 * mu_s^n / mu^(n+1) * P(n + 1, mu t)`.
fn closed_form(mu_s: f64, mu_a: f64, n: u64, t: f64, cap: f64) -> f64 {
    let mu = mu_s + mu_a;
    let nf = n as f64;
    0.5 * cap * (nf * mu_s.ln() - (nf + 1.0) * mu.ln()).exp() * gamma_lr(nf + 1.0, mu * t)
}

#[test]
fn payload_means_match_closed_form_derivatives() {
    let (mu_s, mu_a, n, t) = (5.0, 1.0, 3u64, 0.7);
    let scn = Scenario::new(
        OpticalParams::new(mu_s, mu_a, 0.9).unwrap(),
        SourceSpec::new(std::f64::consts::PI / 10.0, 1.0).unwrap(),
        VoxelGrid::new(0.1, 5).unwrap(),
    );
    let cap = 1.0 - scn.source.cos_alpha();
    let scale = scn.scale();
    let draws = 2_000_000usize;
    let mut rng = StreamFamily::new(31).rng(Purpose::Auxiliary, 0);
    let mut cols = vec![Vec::with_capacity(draws); 6];
    for _ in 0..draws {
        let ray = sample_ray(&mut rng, &scn.params, &scn.source);
        let a: f64 = ray.lengths().iter().sum();
        let p = if ray.n() as u64 == n && a < t { payloads(n, a, mu_s) } else { [0.0; 6] };
        for s in 0..6 {
            cols[s].push(scale * p[s]);
        }
    }
    let f = |s: f64, a: f64| closed_form(s, a, n, t, cap);
    let (hs, ha) = (1e-3 * mu_s, 1e-3 * mu_a);
    let exact = [
        f(mu_s, mu_a),
        (f(mu_s + hs, mu_a) - f(mu_s - hs, mu_a)) / (2.0 * hs),
        (f(mu_s, mu_a + ha) - f(mu_s, mu_a - ha)) / (2.0 * ha),
        (f(mu_s + hs, mu_a) - 2.0 * f(mu_s, mu_a) + f(mu_s - hs, mu_a)) / (hs * hs),
        (f(mu_s + hs, mu_a + ha) - f(mu_s + hs, mu_a - ha) - f(mu_s - hs, mu_a + ha) + f(mu_s - hs, mu_a - ha))
            / (4.0 * hs * ha),
        (f(mu_s, mu_a + ha) - 2.0 * f(mu_s, mu_a) + f(mu_s, mu_a - ha)) / (ha * ha),
    ];
    for s in 0..6 {
        let (m, v) = mean_var(&cols[s]);
        let se = (v / draws as f64).sqrt();
        assert!((m - exact[s]).abs() < 4.0 * se, "slot {s}: mc {m:e} vs closed form {:e} (se {se:e})", exact[s]);
    }
}

#[test]
fn absorption_derivative_is_negative_where_hit() {
    let scn = scenario(105.0, 0.75);
    let positions = [
        Vec3::new(0.0, 0.2, 0.0),
        Vec3::new(0.0, 0.0, -0.2),
        Vec3::new(0.0, 0.2, -0.2),
        Vec3::new(0.0, 0.1, -0.1),
    ];
    let voxels = voxels_of(&scn, &positions).unwrap();
    let b = estimate_with_derivs(&scn, &voxels, SomeSizes::new(5_000, 20, 10).unwrap(), &StreamFamily::new(8)).unwrap();
    let mut checked = 0;
    for i in 0..voxels.len() {
        if b.hits[i] >= 50 {
            assert!(b.values[i][slot::D_MU_A] < 0.0, "voxel {}: {:e}", voxels[i], b.values[i][slot::D_MU_A]);
            checked += 1;
        }
    }
    assert!(checked >= 3);
}

#[test]
fn zero_hit_voxels_are_all_zero() {
    let scn = scenario(105.0, 0.75);
    let voxels = voxels_of(&scn, &[Vec3::new(0.9, 0.9, 0.9)]).unwrap();
    let b = estimate_with_derivs(&scn, &voxels, SomeSizes::new(200, 5, 3).unwrap(), &StreamFamily::new(1)).unwrap();
    assert_eq!(b.hits[0], 0);
    assert_eq!(b.values[0], [0.0; 6]);
}

#[test]
fn absorption_gradient_matches_finite_differences() {
    let (mu_s, mu_a) = (105.0, 0.75);
    let positions = [Vec3::new(0.0, 0.2, 0.0), Vec3::new(0.0, 0.0, -0.2), Vec3::new(0.0, 0.2, -0.2)];
    let sizes = SomeSizes::new(20_000, 40, 30).unwrap();
    let root = StreamFamily::new(606);
    let at = |s: f64, a: f64, k: u64| {
        let scn = scenario(s, a);
        let voxels = voxels_of(&scn, &positions).unwrap();
        estimate_with_derivs(&scn, &voxels, sizes, &root.child(Purpose::Auxiliary, k)).unwrap()
    };
    let d = 0.01 * mu_a;
    let centre = at(mu_s, mu_a, 0);
    let plus = at(mu_s, mu_a + d, 1);
    let minus = at(mu_s, mu_a - d, 2);
    for i in 0..positions.len() {
        let fd = (plus.fluence(i) - minus.fluence(i)) / (2.0 * d);
        let fd_se = (plus.stderr[i][slot::L].powi(2) + minus.stderr[i][slot::L].powi(2)).sqrt() / (2.0 * d);
        let est = centre.values[i][slot::D_MU_A];
        let se = (fd_se.powi(2) + centre.stderr[i][slot::D_MU_A].powi(2)).sqrt();
        assert!((est - fd).abs() < 3.0 * se, "voxel {i}: {est:e} vs {fd:e} (se {se:e})");
    }
}

#[test]
fn hessian_is_symmetric_by_construction() {
    let scn = scenario(75.0, 1.0);
    let voxels = voxels_of(&scn, &[Vec3::new(0.0, 0.2, 0.0)]).unwrap();
    let b = estimate_with_derivs(&scn, &voxels, SomeSizes::new(500, 10, 5).unwrap(), &StreamFamily::new(4)).unwrap();
    let h = b.hess(0);
    assert_eq!(h[0][1], h[1][0]);
}

fn quick_opts() -> DescentOpts {
    DescentOpts { lambda: 0.01, eps_score: 0.005, tau0: 1.0, iter_cap: 4, sizes: SomeSizes::new(1_000, 10, 5).unwrap() }
}

#[test]
fn start_at_truth_with_exact_measurements_stops_at_once() {
    let mut scn = scenario(75.0, 1.0);
    scn.grid = VoxelGrid::new(0.1, 10).unwrap();
    let positions = [Vec3::new(0.0, 0.6, 0.0), Vec3::new(0.0, 0.0, -0.6), Vec3::new(0.0, 0.6, -0.6)];
    let opts = quick_opts();
    let fam = StreamFamily::new(12);
    let values = fluence_core::inverse::estimate_at(&scn, &positions, opts.sizes, &fam.child(Purpose::Descent, 0)).unwrap();
    let meas = Measurements::new(positions.iter().copied().zip(values).collect()).unwrap();
    let trace = hybrid_descent(&scn, &meas, (75.0, 1.0), &opts, &fam).unwrap();
    assert_eq!(trace.rows.len(), 1);
    assert_eq!(trace.rows[0].j, 0.0);
    assert!(trace.converged(opts.eps_score));
}

#[test]
fn descent_is_deterministic_and_respects_the_cap() {
    let mut scn = scenario(75.0, 1.0);
    scn.grid = VoxelGrid::new(0.1, 10).unwrap();
    let meas = Measurements::new(vec![
        (Vec3::new(0.0, 0.6, 0.0), 2.0e-3),
        (Vec3::new(0.0, 0.0, -0.6), 5.0e-3),
        (Vec3::new(0.0, 0.6, -0.6), 9.0e-4),
    ])
    .unwrap();
    let opts = quick_opts();
    let a = hybrid_descent(&scn, &meas, (90.0, 2.0), &opts, &StreamFamily::new(3)).unwrap();
    let b = hybrid_descent(&scn, &meas, (90.0, 2.0), &opts, &StreamFamily::new(3)).unwrap();
    assert_eq!(a, b);
    assert!(a.rows.len() <= opts.iter_cap as usize);
    assert!(a.rows.iter().all(|r| r.mu_s > 0.0 && r.mu_a > 0.0));
    let mut csv = Vec::new();
    a.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), a.rows.len() + 1);
}
