//! Property checks on the algebra kernels, lattice and cluster generation.

use nucpol_core::clusters::{
    build_lattice, build_lattice_with, hyperfine_from_position, sample_occupation_seeded, ClusterGenerator, ClusterOptions,
    LatticeOptions, NATURAL_ABUNDANCE,
};
use nucpol_core::spinalg::{expm_hermitian, partial_trace, ComplexMatrix, RegisterLayout, Slot, C64};
use proptest::prelude::*;

const HBAR: f64 = 1.054_571_817e-34;
const GAMMA_E_RAD: f64 = 1.760_859_63e11;
const GAMMA_C13_RAD: f64 = 6.728_284e7;

/// Point-dipole coupling from the vector form with `ħγ` in rad/s/T.
fn dipolar_oracle(p: [f64; 3]) -> (f64, f64) {
    let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    let d_hz = 1e-7 * HBAR * GAMMA_E_RAD * GAMMA_C13_RAD / (r * 1e-9).powi(3) / (2.0 * std::f64::consts::PI);
    let cz = p[2] / r;
    let cross = (p[0] * p[0] + p[1] * p[1]).sqrt() / r;
    (d_hz * 1e-6 * (3.0 * cz * cz - 1.0), d_hz * 1e-6 * 3.0 * cz.abs() * cross)
}

fn hermitian(dim: usize, entries: &[f64]) -> ComplexMatrix {
    let mut it = entries.iter().cycle();
    let a = ComplexMatrix::from_fn(dim, |_, _| C64::new(*it.next().unwrap(), *it.next().unwrap()));
    a.add(&a.adjoint())
}

fn density(dim: usize, entries: &[f64]) -> ComplexMatrix {
    let mut it = entries.iter().cycle();
    let a = ComplexMatrix::from_fn(dim, |_, _| C64::new(*it.next().unwrap(), *it.next().unwrap()));
    let m = a.matmul_adjoint(&a);
    let tr = m.trace().re;
    m.scale(C64::new(1.0 / tr, 0.0))
}

#[test]
fn two_nanometre_lattice_site_count() {
    assert_eq!(build_lattice(2.0).unwrap().len(), 5849);
    let with_n = LatticeOptions { include_nitrogen: true, ..LatticeOptions::default() };
    assert_eq!(build_lattice_with(2.0, &with_n).unwrap().len(), 5850);
}

#[test]
fn lattice_sites_are_inside_radius_and_distinct() {
    let sites = build_lattice(1.0).unwrap();
    assert!(sites.iter().all(|s| s.radius() <= 1.0 + 1e-12 && s.radius() > 0.1));
    for (i, a) in sites.iter().enumerate() {
        for b in &sites[i + 1..] {
            let d: f64 = a.position.iter().zip(&b.position).map(|(x, y)| (x - y) * (x - y)).sum();
            assert!(d.sqrt() > 0.15, "sites closer than a bond");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn hyperfine_matches_vector_dipole(x in -2.0..2.0f64, y in -2.0..2.0f64, z in -2.0..2.0f64) {
        let r = (x * x + y * y + z * z).sqrt();
        prop_assume!(r > 0.2);
        let (a_par, a_perp) = hyperfine_from_position([x, y, z], [0.0, 0.0, 1.0]).unwrap();
        let (o_par, o_perp) = dipolar_oracle([x, y, z]);
        let scale = o_par.abs().max(o_perp).max(1e-9);
        prop_assert!((a_par - o_par).abs() / scale < 1e-4);
        prop_assert!((a_perp - o_perp).abs() / scale < 1e-4);
    }

    #[test]
    fn occupation_count_is_binomial(seed in any::<u64>(), stream in 0u64..1000) {
        let occ = sample_occupation_seeded(5849, seed, stream, NATURAL_ABUNDANCE).unwrap();
        // mean 64.3, sd 7.9
        prop_assert!((30..=100).contains(&occ.len()));
        prop_assert!(occ.windows(2).all(|w| w[0] < w[1]) && occ.iter().all(|&i| i < 5849));
        prop_assert_eq!(occ, sample_occupation_seeded(5849, seed, stream, NATURAL_ABUNDANCE).unwrap());
    }

    #[test]
    fn expm_is_unitary_and_composes(entries in prop::collection::vec(-1.0..1.0f64, 32), t in -2.0..2.0f64) {
        let h = hermitian(4, &entries);
        let u = expm_hermitian(&h, t).unwrap();
        prop_assert!(u.unitarity_deviation() < 1e-11);
        let half = expm_hermitian(&h, t / 2.0).unwrap();
        prop_assert!(half.matmul(&half).max_abs_diff(&u) < 1e-11);
    }

    #[test]
    fn partial_trace_of_product_state(a in prop::collection::vec(-1.0..1.0f64, 8), b in prop::collection::vec(-1.0..1.0f64, 32)) {
        let rho_e = density(2, &a);
        let rho_n = density(4, &b);
        let joint = rho_e.kron(&rho_n);
        let nuclear = partial_trace(&joint, RegisterLayout::joint(2), &[Slot::Nucleus(0), Slot::Nucleus(1)]).unwrap();
        prop_assert!(nuclear.max_abs_diff(&rho_n) < 1e-13);
        let electron = partial_trace(&joint, RegisterLayout::joint(2), &[Slot::Electron]).unwrap();
        prop_assert!(electron.max_abs_diff(&rho_e) < 1e-13);
    }
}

#[test]
fn cluster_generation_is_reproducible_and_capped() {
    let gen = ClusterGenerator::new(ClusterOptions::default(), 2024).unwrap();
    for index in 0..5 {
        let c = gen.generate(index).unwrap();
        assert_eq!(c, gen.generate(index).unwrap());
        assert_eq!(c.selected.len(), 6);
        assert!(c.selected.windows(2).all(|w| w[0].a_perp >= w[1].a_perp));
        for n in &c.selected {
            let (o_par, o_perp) = dipolar_oracle(n.position);
            assert!((n.a_par - o_par).abs() < 1e-6 && (n.a_perp - o_perp).abs() < 1e-6);
        }
        let occupied_max = c.occupied.iter().map(|&p| dipolar_oracle(p).1).fold(0.0, f64::max);
        assert!(occupied_max < 0.1);
        assert_eq!(
            c.selected[0].a_perp,
            c.occupied.iter().map(|&p| hyperfine_from_position(p, [0.0, 0.0, 1.0]).unwrap().1).fold(0.0, f64::max)
        );
    }
    assert_ne!(gen.generate(0).unwrap().occupied, gen.generate(1).unwrap().occupied);
}
