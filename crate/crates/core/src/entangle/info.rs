//! Information measures over Eve's conditional ancilla states: the Holevo
//! bound as the upper envelope, the two-outcome Helstrom measurement as the
//! plain discrimination value, and a numerically optimized projective
//! measurement as the operational (achievable, individual) figure.

use super::{EntangledObservables, EntangleError};
use crate::rng;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

/// The three information figures for one attack.
#[derive(Debug, Clone, Copy)]
pub struct InfoValues {
    /// Holevo bound of the conditional ensemble (bits).
    pub holevo: f64,
    /// Mutual information of the binary Helstrom measurement (bits).
    pub helstrom: f64,
    /// Best projective measurement found (bits); a certified lower bound on
    /// Eve's accessible information.
    pub projective: f64,
}

impl InfoValues {
    /// The operational value used for security comparisons: the best
    /// individual measurement found.
    pub fn operational(&self) -> f64 {
        self.projective.max(self.helstrom)
    }
}

fn entropy_bits(eigs: impl Iterator<Item = f64>) -> f64 {
    let mut s = 0.0;
    for e in eigs {
        if e > 1e-15 {
            s -= e * e.log2();
        }
    }
    s
}

fn shannon(p: &[f64]) -> f64 {
    entropy_bits(p.iter().copied())
}

fn check_density(rho: &DMatrix<f64>) -> Result<(), EntangleError> {
    let n = rho.nrows();
    if rho.ncols() != n {
        return Err(EntangleError::InvalidState("not square".into()));
    }
    let tr: f64 = (0..n).map(|i| rho[(i, i)]).sum();
    if (tr - 1.0).abs() > 1e-8 {
        return Err(EntangleError::InvalidState(format!("trace {tr} != 1")));
    }
    for i in 0..n {
        for j in 0..i {
            if (rho[(i, j)] - rho[(j, i)]).abs() > 1e-8 {
                return Err(EntangleError::InvalidState("not symmetric".into()));
            }
        }
    }
    let eig = SymmetricEigen::new(rho.clone());
    if eig.eigenvalues.iter().any(|e| *e < -1e-8) {
        return Err(EntangleError::InvalidState("negative eigenvalue".into()));
    }
    Ok(())
}

/// Holevo bound chi = S(rho_mix) - sum_b p_b S(rho_b).
pub fn holevo(rho: &[DMatrix<f64>; 2], priors: [f64; 2]) -> f64 {
    let mix = &rho[0] * priors[0] + &rho[1] * priors[1];
    let s_mix = entropy_bits(SymmetricEigen::new(mix).eigenvalues.iter().copied());
    let s0 = entropy_bits(SymmetricEigen::new(rho[0].clone()).eigenvalues.iter().copied());
    let s1 = entropy_bits(SymmetricEigen::new(rho[1].clone()).eigenvalues.iter().copied());
    s_mix - priors[0] * s0 - priors[1] * s1
}

/// Mutual information of the two-outcome Helstrom measurement (projector
/// onto the positive part of p0 rho0 - p1 rho1).
pub fn helstrom_mi(rho: &[DMatrix<f64>; 2], priors: [f64; 2]) -> f64 {
    let diff = &rho[0] * priors[0] - &rho[1] * priors[1];
    let eig = SymmetricEigen::new(diff);
    let n = eig.eigenvalues.len();
    let mut proj = DMatrix::zeros(n, n);
    for i in 0..n {
        if eig.eigenvalues[i] > 0.0 {
            let v = eig.eigenvectors.column(i);
            for a in 0..n {
                for b in 0..n {
                    proj[(a, b)] += v[a] * v[b];
                }
            }
        }
    }
    let a = (&rho[0] * &proj).trace().clamp(0.0, 1.0);
    let b = (&rho[1] * &proj).trace().clamp(0.0, 1.0);
    binary_channel_mi(priors, a, b)
}

fn binary_channel_mi(priors: [f64; 2], a: f64, b: f64) -> f64 {
    let m0 = priors[0] * a + priors[1] * b;
    shannon(&[m0, 1.0 - m0])
        - priors[0] * shannon(&[a, 1.0 - a])
        - priors[1] * shannon(&[b, 1.0 - b])
}

/// Outcome distributions of a projective measurement given as orthonormal
/// rows of `basis`, and the resulting mutual information.
fn mi_of_basis(basis: &DMatrix<f64>, rho: &[DMatrix<f64>; 2], priors: [f64; 2]) -> f64 {
    let r = basis.nrows();
    let mut q0 = vec![0.0; r];
    let mut q1 = vec![0.0; r];
    for i in 0..r {
        let v = basis.row(i).transpose();
        q0[i] = (v.transpose() * &rho[0] * &v)[(0, 0)].max(0.0);
        q1[i] = (v.transpose() * &rho[1] * &v)[(0, 0)].max(0.0);
    }
    let (s0, s1) = (q0.iter().sum::<f64>(), q1.iter().sum::<f64>());
    if s0 > 0.0 {
        q0.iter_mut().for_each(|x| *x /= s0);
    }
    if s1 > 0.0 {
        q1.iter_mut().for_each(|x| *x /= s1);
    }
    let mix: Vec<f64> = q0
        .iter()
        .zip(&q1)
        .map(|(a, b)| priors[0] * a + priors[1] * b)
        .collect();
    shannon(&mix) - priors[0] * shannon(&q0) - priors[1] * shannon(&q1)
}

fn rotation(angles: &[f64], r: usize) -> DMatrix<f64> {
    let mut rot = DMatrix::identity(r, r);
    let mut t = 0;
    for i in 0..r {
        for j in (i + 1)..r {
            let (s, c) = angles[t].sin_cos();
            t += 1;
            let mut g = DMatrix::identity(r, r);
            g[(i, i)] = c;
            g[(j, j)] = c;
            g[(i, j)] = -s;
            g[(j, i)] = s;
            rot = rot * g;
        }
    }
    rot
}

/// Gradient-ascend the measurement basis angles from one start.
fn ascend_basis(
    start: &DMatrix<f64>,
    rho: &[DMatrix<f64>; 2],
    priors: [f64; 2],
) -> f64 {
    let r = start.nrows();
    let na = r * (r - 1) / 2;
    if na == 0 {
        return mi_of_basis(start, rho, priors);
    }
    let f = |angles: &[f64]| mi_of_basis(&(rotation(angles, r) * start), rho, priors);
    let mut angles = vec![0.0; na];
    let mut best = f(&angles);
    let mut step = 0.2;
    let h = 1e-5;
    for _ in 0..120 {
        let mut grad = vec![0.0; na];
        for i in 0..na {
            let mut up = angles.clone();
            up[i] += h;
            let mut dn = angles.clone();
            dn[i] -= h;
            grad[i] = (f(&up) - f(&dn)) / (2.0 * h);
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < 1e-9 || step < 1e-7 {
            break;
        }
        let trial: Vec<f64> = angles
            .iter()
            .zip(&grad)
            .map(|(a, g)| a + step * g / norm)
            .collect();
        let v = f(&trial);
        if v > best {
            best = v;
            angles = trial;
            step *= 1.3;
        } else {
            step *= 0.5;
        }
    }
    best
}

/// Best projective-measurement information over several starts: the
/// support basis, the Helstrom eigenbasis, the mixed-state eigenbasis, and
/// seeded random rotations.
pub fn projective_opt_mi(
    rho: &[DMatrix<f64>; 2],
    priors: [f64; 2],
    random_starts: usize,
    seed: u64,
) -> f64 {
    let r = rho[0].nrows();
    let mut best: f64 = 0.0;
    let diff = &rho[0] * priors[0] - &rho[1] * priors[1];
    let mix = &rho[0] * priors[0] + &rho[1] * priors[1];
    let mut starts: Vec<DMatrix<f64>> = vec![
        DMatrix::identity(r, r),
        SymmetricEigen::new(diff).eigenvectors.transpose(),
        SymmetricEigen::new(mix).eigenvectors.transpose(),
    ];
    let mut rng = rng::stream(seed, "proj-basis", 0);
    let na = r * (r - 1) / 2;
    for _ in 0..random_starts {
        let angles: Vec<f64> = (0..na)
            .map(|_| (rng.gen::<f64>() - 0.5) * std::f64::consts::PI)
            .collect();
        starts.push(rotation(&angles, r));
    }
    for s in &starts {
        best = best.max(ascend_basis(s, rho, priors));
    }
    best
}

/// All three information figures for an attack's conditional ensemble.
pub fn eve_information(
    obs: &EntangledObservables,
    proj_random_starts: usize,
) -> Result<InfoValues, EntangleError> {
    if obs.validated[0] + obs.validated[1] <= 0.0 {
        return Err(EntangleError::NoValidation);
    }
    check_density(&obs.rho[0])?;
    check_density(&obs.rho[1])?;
    Ok(InfoValues {
        holevo: holevo(&obs.rho, obs.priors),
        helstrom: helstrom_mi(&obs.rho, obs.priors),
        projective: projective_opt_mi(&obs.rho, obs.priors, proj_random_starts, 0x5eed),
    })
}

/// Mutual information of the fixed measurement in Eve's computational
/// ancilla basis (her classical record). For emulated intercept-resend
/// attacks this reproduces the closed-form I_AE.
pub fn ancilla_basis_information(obs: &EntangledObservables) -> f64 {
    // lift the support-projected states back to the 9-dimensional ancilla
    let full = [
        obs.support.transpose() * &obs.rho[0] * &obs.support,
        obs.support.transpose() * &obs.rho[1] * &obs.support,
    ];
    let n = full[0].nrows();
    let q0: Vec<f64> = (0..n).map(|e| full[0][(e, e)].max(0.0)).collect();
    let q1: Vec<f64> = (0..n).map(|e| full[1][(e, e)].max(0.0)).collect();
    let mix: Vec<f64> = q0
        .iter()
        .zip(&q1)
        .map(|(a, b)| obs.priors[0] * a + obs.priors[1] * b)
        .collect();
    shannon(&mix) - obs.priors[0] * shannon(&q0) - obs.priors[1] * shannon(&q1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pure(v: &[f64]) -> DMatrix<f64> {
        let n = v.len();
        DMatrix::from_fn(n, n, |i, j| v[i] * v[j])
    }

    #[test]
    fn identical_states_carry_nothing() {
        let rho = [pure(&[1.0, 0.0]), pure(&[1.0, 0.0])];
        assert!(holevo(&rho, [0.5, 0.5]).abs() < 1e-12);
        assert!(helstrom_mi(&rho, [0.5, 0.5]).abs() < 1e-9);
        assert!(projective_opt_mi(&rho, [0.5, 0.5], 2, 1).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_pure_states_carry_one_bit() {
        let rho = [pure(&[1.0, 0.0]), pure(&[0.0, 1.0])];
        assert!((holevo(&rho, [0.5, 0.5]) - 1.0).abs() < 1e-9);
        assert!((helstrom_mi(&rho, [0.5, 0.5]) - 1.0).abs() < 1e-9);
        assert!((projective_opt_mi(&rho, [0.5, 0.5], 2, 1) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn measures_are_ordered() {
        // nonorthogonal pure states: projective <= holevo, helstrom <= projective
        let c = 30f64.to_radians();
        let rho = [pure(&[1.0, 0.0]), pure(&[c.cos(), c.sin()])];
        let h = holevo(&rho, [0.5, 0.5]);
        let hel = helstrom_mi(&rho, [0.5, 0.5]);
        let proj = projective_opt_mi(&rho, [0.5, 0.5], 4, 2);
        assert!(hel <= proj + 1e-9, "helstrom {hel} > projective {proj}");
        assert!(proj <= h + 1e-9, "projective {proj} > holevo {h}");
        // two pure states: the optimal measurement is projective and known
        // to saturate at the Levitin value; sanity-check it beats guessing
        assert!(proj > 0.1);
    }

    #[test]
    fn invalid_density_is_rejected() {
        let mut bad = pure(&[1.0, 0.0]);
        bad[(0, 0)] = 2.0;
        let obs = super::super::EntangledObservables {
            q: 0.0,
            contrast: 1.0,
            validated: [0.5, 0.5],
            rho: [bad, pure(&[0.0, 1.0])],
            priors: [0.5, 0.5],
            support: DMatrix::identity(2, 2),
        };
        assert!(matches!(
            eve_information(&obs, 1),
            Err(EntangleError::InvalidState(_))
        ));
    }
}
