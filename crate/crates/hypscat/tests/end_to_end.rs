use hypscat::fem::{Discretization, ElementOrder, NeumannSpectralData};
use hypscat::geometry::{build_modular, Symmetry};
use hypscat::mesh::Mesh;
use hypscat::scattering::{scattering_matrix, unitarity_defect, InteriorNd, ScatteringOptions};
use hypscat::specialfn::modular_phi;
use hypscat::C64;

fn coarse_modular() -> Discretization {
    let spec = build_modular(1.5, 0.0, Symmetry::Even).unwrap();
    let mesh = Mesh::triangulate(&spec, 0.15, 48).unwrap();
    Discretization::new(&mesh, ElementOrder::Quadratic, 6).unwrap()
}

fn relative_error(nd: &InteriorNd, t: f64) -> f64 {
    let s = C64::new(0.5, t);
    let c = scattering_matrix(nd, s, &ScatteringOptions::default()).unwrap().c;
    let phi = modular_phi(s).unwrap();
    (c[(0, 0)] - phi).norm() / phi.norm()
}

#[test]
fn anchored_series_matches_modular_closed_form() {
    let disc = coarse_modular();
    let eig = disc.solve_spectrum(120).unwrap();
    let anchors: Vec<_> = [C64::new(0.75, -3.0), C64::new(0.75, 3.0)].iter().map(|&s0| disc.anchor(s0, &eig.values).unwrap()).collect();
    let nd = InteriorNd::series(disc.spectral_data(&eig), &anchors).unwrap();
    for t in [0.5, 1.5, 3.0, 5.0] {
        assert!(relative_error(&nd, t) < 1e-3, "t = {t}: {}", relative_error(&nd, t));
    }
    // conjugate anchor pairs keep the interpolant Hermitian on the real μ axis
    let c = scattering_matrix(&nd, C64::new(0.5, 2.2), &ScatteringOptions::default()).unwrap().c;
    assert!(unitarity_defect(&c) < 1e-12);
}

#[test]
fn series_and_direct_routes_agree_at_the_anchor_scale() {
    let disc = coarse_modular();
    let eig = disc.solve_spectrum(120).unwrap();
    let s0 = C64::new(0.75, -2.0);
    let anchored = InteriorNd::series(disc.spectral_data(&eig), &[disc.anchor(s0, &eig.values).unwrap()]).unwrap();
    let direct = InteriorNd::direct(disc);
    // at the anchor the anchored series reproduces the direct solve
    let a = anchored.eval(s0).unwrap().entries;
    let d = direct.eval(s0).unwrap().entries;
    assert!((&a - &d).norm_l2() <= 1e-10 * d.norm_l2());
    // elsewhere they agree to the truncation error of the tail
    let s = C64::new(0.5, 1.0);
    let a = anchored.eval(s).unwrap().entries;
    let d = direct.eval(s).unwrap().entries;
    assert!((&a - &d).norm_l2() <= 1e-3 * d.norm_l2());
}

#[test]
fn spectral_data_survives_json() {
    let disc = coarse_modular();
    let eig = disc.solve_spectrum(20).unwrap();
    let data = disc.spectral_data(&eig);
    let back = NeumannSpectralData::from_json(&data.to_json().unwrap()).unwrap();
    assert_eq!(data, back);
    assert!(back.reduced);
    // first Neumann eigenvalue of a connected domain is zero
    assert!(back.eigenvalues[0].abs() < 1e-8);
}
