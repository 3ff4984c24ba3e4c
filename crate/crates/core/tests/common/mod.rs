//! Brute-force reference evolutions on the joint electron–nuclear register.

#![allow(dead_code)]

use nucpol_core::engine::signed_polarizations;
use nucpol_core::model::{ElectronModel, NuclearSpinParams, SpinSystem};
use nucpol_core::sequences::{free_evolution, prepared_electron};
use nucpol_core::spinalg::{expm_hermitian, partial_trace, ComplexMatrix, RegisterLayout, Slot, C64};

/// `|ψ_e><ψ_e| ⊗ ρ_n`.
pub fn joint_state(electron: [C64; 2], rho_n: &ComplexMatrix) -> ComplexMatrix {
    let e = ComplexMatrix::from_fn(2, |i, j| electron[i] * electron[j].conj());
    e.kron(rho_n)
}

/// `tr_e(U (|init><init| ⊗ ρ) U†)`.
pub fn naive_step(u: &ComplexMatrix, rho_n: &ComplexMatrix) -> ComplexMatrix {
    let n = rho_n.dim().trailing_zeros() as usize;
    let init = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    let evolved = u.matmul(&joint_state(init, rho_n)).matmul_adjoint(u);
    let keep: Vec<Slot> = (0..n).map(Slot::Nucleus).collect();
    partial_trace(&evolved, RegisterLayout::joint(n), &keep).unwrap()
}

/// Re-prepare the electron, evolve freely for `wait`, trace the electron out.
pub fn naive_disentangle(system: &SpinSystem, theta_e: f64, wait: f64, rho_n: &ComplexMatrix) -> ComplexMatrix {
    let n = system.nuclear_count();
    let w = free_evolution(system, wait).unwrap();
    let evolved = w.matmul(&joint_state(prepared_electron(theta_e), rho_n)).matmul_adjoint(&w);
    let keep: Vec<Slot> = (0..n).map(Slot::Nucleus).collect();
    partial_trace(&evolved, RegisterLayout::joint(n), &keep).unwrap()
}

pub fn diag_only(rho: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&rho.diagonal())
}

pub fn signed_from(rho: &ComplexMatrix) -> Vec<f64> {
    signed_polarizations(&rho.diagonal().iter().map(|z| z.re).collect::<Vec<_>>())
}

pub fn maximally_mixed(n: usize) -> ComplexMatrix {
    let d = 1usize << n;
    ComplexMatrix::identity(d).scale(C64::new(1.0 / d as f64, 0.0))
}

/// Unitary `exp(-i H)` for a Hermitian `H` built from `entries`.
pub fn unitary_from(dim: usize, entries: &[f64]) -> ComplexMatrix {
    let mut it = entries.iter().cycle();
    let a = ComplexMatrix::from_fn(dim, |_, _| C64::new(*it.next().unwrap(), *it.next().unwrap()));
    let h = a.add(&a.adjoint());
    expm_hermitian(&h, 1.0).unwrap()
}

/// Density matrix `A A† / tr` from `entries`.
pub fn state_from(dim: usize, entries: &[f64]) -> ComplexMatrix {
    let mut it = entries.iter().cycle();
    let a = ComplexMatrix::from_fn(dim, |_, _| C64::new(*it.next().unwrap(), *it.next().unwrap()));
    let m = a.matmul_adjoint(&a);
    let tr = m.trace().re;
    m.scale(C64::new(1.0 / tr, 0.0))
}

pub fn system(nv: bool, larmor: f64, nuclei: &[(f64, f64)]) -> SpinSystem {
    let electron = if nv { ElectronModel::nv_effective() } else { ElectronModel::spin_half() };
    SpinSystem::new(electron, nuclei.iter().map(|&(a, b)| NuclearSpinParams::new(a, b)).collect(), larmor).unwrap()
}
