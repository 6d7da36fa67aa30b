use nalgebra::DVector;
use num_complex::Complex64;

use crate::bounds::{hermitian_part, BeamDesign};
use crate::error::{Error, Result};

/// Principal-eigencomponent projection of every covariance.
///
/// Returns the beam vectors `v = u₁·√λ₁` and the rank-1 design. Quantization
/// noise is lowered to `β` times the new per-AP signal power, which never
/// exceeds the old one.
pub fn rank1_project(design: &BeamDesign, beta: f64) -> Result<(Vec<DVector<Complex64>>, BeamDesign)> {
    let m = design.num_aps();
    let mut beams = Vec::with_capacity(design.num_streams());
    for v in &design.covariances {
        let v = hermitian_part(v);
        let scale = v.iter().map(|c| c.norm()).fold(1.0, f64::max);
        let eig = v.symmetric_eigen();
        let (mut top, mut min) = (0, f64::INFINITY);
        for (idx, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam > eig.eigenvalues[top] {
                top = idx;
            }
            min = min.min(lam);
        }
        if min < -1e-8 * scale {
            return Err(Error::NotPsd(min));
        }
        let lambda = eig.eigenvalues[top].max(0.0);
        let u = eig.eigenvectors.column(top).into_owned();
        // fix the global phase so the largest entry is real and positive
        let pivot = u.iter().cloned().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or(Complex64::new(1.0, 0.0));
        let phase = if pivot.norm() > 0.0 { pivot.conj() / pivot.norm() } else { Complex64::new(1.0, 0.0) };
        beams.push(u.map(|c| c * phase * lambda.sqrt()));
    }
    let covariances: Vec<_> = beams.iter().map(|b| b * b.adjoint()).collect();
    let mut out = BeamDesign { covariances, quant_noise: vec![0.0; m] };
    for i in 0..m {
        out.quant_noise[i] = beta * out.signal_power(i);
    }
    Ok((beams, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rank_one_is_fixed_point() {
        let v = DVector::from_vec(vec![c(0.3, 0.4), c(-1.0, 0.2), c(0.5, -0.5)]);
        let d = BeamDesign::from_beams(&[v.clone()], vec![0.1, 0.1, 0.1]).unwrap();
        let (_, p) = rank1_project(&d, 0.05).unwrap();
        let diff = (&p.covariances[0] - &d.covariances[0]).iter().map(|x| x.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-10);
    }

    #[test]
    fn identity_keeps_one_unit_direction() {
        let d = BeamDesign::new(vec![DMatrix::identity(2, 2)], vec![0.0, 0.0]).unwrap();
        let (beams, p) = rank1_project(&d, 1.0).unwrap();
        assert!((beams[0].norm() - 1.0).abs() < 1e-12);
        let total: f64 = p.signal_powers().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        for i in 0..2 {
            assert!(p.signal_power(i) <= 1.0 + 1e-12);
            assert!((p.signal_power(i) - beams[0][i].norm_sqr()).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_indefinite_input() {
        let v = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
        let d = BeamDesign { covariances: vec![v], quant_noise: vec![0.0, 0.0] };
        assert!(matches!(rank1_project(&d, 0.1), Err(Error::NotPsd(_))));
    }
}
