//! Takagi factorization of a complex symmetric matrix and the orthogonal
//! times symmetric split of a unitary matrix.

use multistrip::matfact::{frobenius, mat_exp, orth_sym_factor, takagi, CMatrix};
use num_complex::Complex64;

fn main() -> multistrip::Result<()> {
    let c = Complex64::new;
    let upsilon = CMatrix::from_row_slice(
        3,
        3,
        &[
            c(0.30, 0.10), c(0.05, -0.20), c(0.00, 0.10),
            c(0.05, -0.20), c(0.20, 0.00), c(0.15, 0.05),
            c(0.00, 0.10), c(0.15, 0.05), c(-0.10, 0.20),
        ],
    );
    let t = takagi(&upsilon)?;
    println!("singular values: {:.6?}", t.sigma.as_slice());
    println!("|U^T S U - Y|_F = {:.2e}", frobenius(&(t.reconstruct() - &upsilon)));

    // a unitary matrix split into a real rotation and a symmetric unitary
    let h = CMatrix::from_row_slice(2, 2, &[c(0.4, 0.0), c(0.2, 0.3), c(0.2, -0.3), c(-0.1, 0.0)]);
    let u = mat_exp(&h.map(|z| c(0.0, 1.0) * z))?;
    let f = orth_sym_factor(&u)?;
    println!("P = {:.6?}", f.p.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>());
    println!("|P Phi - U|_F = {:.2e}", frobenius(&(f.p.map(Complex64::from) * &f.phi - &u)));
    println!("|Phi - Phi^T|_F = {:.2e}", frobenius(&(&f.phi - f.phi.transpose())));
    Ok(())
}
