//! Real parameterization of the design variables.
//!
//! A Hermitian `M×M` matrix is stored in `M²` reals: entry `i*M + j` holds
//! `V[i,i]` when `i == j`, `Re V[i,j]` when `i < j` and `Im V[j,i]` when `i > j`.
//! The design vector concatenates every stream's block followed by `ω`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::bounds::BeamDesign;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DesignLayout {
    pub num_streams: usize,
    pub num_aps: usize,
}

impl DesignLayout {
    pub fn new(num_streams: usize, num_aps: usize) -> Self {
        Self { num_streams, num_aps }
    }

    pub fn block_len(&self) -> usize {
        self.num_aps * self.num_aps
    }

    pub fn stream_offset(&self, s: usize) -> usize {
        s * self.block_len()
    }

    /// Index of `V_s[i,i]`.
    pub fn diag(&self, s: usize, i: usize) -> usize {
        self.stream_offset(s) + i * self.num_aps + i
    }

    pub fn omega(&self, i: usize) -> usize {
        self.num_streams * self.block_len() + i
    }

    pub fn len(&self) -> usize {
        self.num_streams * self.block_len() + self.num_aps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_vector(&self, design: &BeamDesign) -> Vec<f64> {
        let mut x = vec![0.0; self.len()];
        for (s, v) in design.covariances.iter().enumerate() {
            write_hermitian(v, &mut x[self.stream_offset(s)..self.stream_offset(s) + self.block_len()]);
        }
        for i in 0..self.num_aps {
            x[self.omega(i)] = design.quant_noise[i];
        }
        x
    }

    /// Rebuilds the design; the covariances are Hermitian by construction.
    pub fn to_design(&self, x: &[f64]) -> BeamDesign {
        let covariances = (0..self.num_streams)
            .map(|s| read_hermitian(&x[self.stream_offset(s)..self.stream_offset(s) + self.block_len()], self.num_aps))
            .collect();
        let quant_noise = (0..self.num_aps).map(|i| x[self.omega(i)]).collect();
        BeamDesign { covariances, quant_noise }
    }
}

pub fn write_hermitian(v: &DMatrix<Complex64>, out: &mut [f64]) {
    let m = v.nrows();
    for i in 0..m {
        for j in 0..m {
            out[i * m + j] = match i.cmp(&j) {
                std::cmp::Ordering::Equal => v[(i, i)].re,
                std::cmp::Ordering::Less => 0.5 * (v[(i, j)].re + v[(j, i)].re),
                std::cmp::Ordering::Greater => 0.5 * (v[(j, i)].im - v[(i, j)].im),
            };
        }
    }
}

pub fn read_hermitian(params: &[f64], m: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(m, m, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Equal => Complex64::new(params[i * m + i], 0.0),
        std::cmp::Ordering::Less => Complex64::new(params[i * m + j], params[j * m + i]),
        std::cmp::Ordering::Greater => Complex64::new(params[j * m + i], -params[i * m + j]),
    })
}

/// Coefficients `c` with `Re(hᴴ V h) = Σ c[p] · params[p]`.
pub fn quad_coefficients(h: &DVector<Complex64>) -> Vec<f64> {
    let m = h.len();
    let mut c = vec![0.0; m * m];
    for i in 0..m {
        c[i * m + i] = h[i].norm_sqr();
        for j in i + 1..m {
            let cij = h[i].conj() * h[j];
            c[i * m + j] = 2.0 * cij.re;
            c[j * m + i] = -2.0 * cij.im;
        }
    }
    c
}

/// `Re tr(W E_p)` for every basis element `E_p` of the parameterization.
pub fn trace_against_basis(w: &DMatrix<Complex64>, out: &mut [f64]) {
    let m = w.nrows();
    for i in 0..m {
        out[i * m + i] = w[(i, i)].re;
        for j in i + 1..m {
            out[i * m + j] = (w[(i, j)] + w[(j, i)]).re;
            out[j * m + i] = ((w[(j, i)] - w[(i, j)]) * Complex64::i()).re;
        }
    }
}

/// `W E_p W` for basis element `p`.
pub fn sandwich_basis(w: &DMatrix<Complex64>, p: usize) -> DMatrix<Complex64> {
    let m = w.nrows();
    let (i, j) = (p / m, p % m);
    let outer = |a: usize, b: usize| w.column(a) * w.row(b);
    match i.cmp(&j) {
        std::cmp::Ordering::Equal => outer(i, i),
        std::cmp::Ordering::Less => outer(i, j) + outer(j, i),
        std::cmp::Ordering::Greater => {
            // E = i·e_j e_iᵀ − i·e_i e_jᵀ for Im V[j,i]
            (outer(j, i) - outer(i, j)) * Complex64::i()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::quad_form;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sample_hermitian() -> DMatrix<Complex64> {
        DMatrix::from_row_slice(
            3,
            3,
            &[
                c(2.0, 0.0),
                c(0.3, 0.4),
                c(-0.1, 0.7),
                c(0.3, -0.4),
                c(1.5, 0.0),
                c(0.25, -0.2),
                c(-0.1, -0.7),
                c(0.25, 0.2),
                c(3.0, 0.0),
            ],
        )
    }

    #[test]
    fn hermitian_roundtrip() {
        let v = sample_hermitian();
        let mut p = vec![0.0; 9];
        write_hermitian(&v, &mut p);
        assert_eq!(read_hermitian(&p, 3), v);
    }

    #[test]
    fn quad_coefficients_match_quadratic_form() {
        let v = sample_hermitian();
        let h = DVector::from_vec(vec![c(0.5, -1.0), c(0.2, 0.3), c(-0.7, 0.1)]);
        let mut p = vec![0.0; 9];
        write_hermitian(&v, &mut p);
        let lin: f64 = quad_coefficients(&h).iter().zip(&p).map(|(a, b)| a * b).sum();
        assert!((lin - quad_form(&h, &v)).abs() < 1e-12);
    }

    #[test]
    fn basis_traces_match_finite_differences() {
        let v = sample_hermitian();
        let w = v.clone().try_inverse().unwrap();
        let mut tr = vec![0.0; 9];
        trace_against_basis(&w, &mut tr);
        let mut p = vec![0.0; 9];
        write_hermitian(&v, &mut p);
        let logdet = |q: &[f64]| read_hermitian(q, 3).determinant().re.ln();
        for a in 0..9 {
            let h = 1e-6;
            let mut up = p.clone();
            up[a] += h;
            let mut dn = p.clone();
            dn[a] -= h;
            let fd = (logdet(&up) - logdet(&dn)) / (2.0 * h);
            assert!((fd - tr[a]).abs() < 1e-6, "param {a}: {fd} vs {}", tr[a]);
            // d/dp_b of tr(W E_a) = -Re tr(W E_b W E_a)
            let x = sandwich_basis(&w, a);
            let mut hess_row = vec![0.0; 9];
            trace_against_basis(&x, &mut hess_row);
            for b in 0..9 {
                let mut up = p.clone();
                up[b] += h;
                let mut dn = p.clone();
                dn[b] -= h;
                let mut t_up = vec![0.0; 9];
                let mut t_dn = vec![0.0; 9];
                trace_against_basis(&read_hermitian(&up, 3).try_inverse().unwrap(), &mut t_up);
                trace_against_basis(&read_hermitian(&dn, 3).try_inverse().unwrap(), &mut t_dn);
                let fd = (t_up[a] - t_dn[a]) / (2.0 * h);
                assert!((fd + hess_row[b]).abs() < 1e-5, "({a},{b}): {fd} vs {}", -hess_row[b]);
            }
        }
    }
}
