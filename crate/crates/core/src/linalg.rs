//! Dense matrix exponential (Padé-13 with scaling and squaring).

use nalgebra::DMatrix;

const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Largest 1-norm for which the degree-13 approximant is accurate to double
/// precision without scaling.
const THETA13: f64 = 5.371920351148152;

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `e^{A}` for a square matrix.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let norm = norm1(a);
    if norm == 0.0 {
        return ident;
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * 2f64.powi(-s);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &B13;
    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = &a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .expect("Padé denominator is nonsingular after scaling");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_and_zero() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 0.5, -30.0]));
        let e = expm(&a);
        for (i, d) in [-1.0f64, 0.5, -30.0].iter().enumerate() {
            assert!((e[(i, i)] - d.exp()).abs() <= 1e-14 * d.exp().max(1.0));
        }
        assert_eq!(expm(&DMatrix::zeros(3, 3)), DMatrix::identity(3, 3));
    }

    #[test]
    fn rotation_generator() {
        // exp of [[0, -w], [w, 0]] is a rotation by w
        let w = 7.3;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -w, w, 0.0]);
        let e = expm(&a);
        let expect = [w.cos(), -w.sin(), w.sin(), w.cos()];
        for (x, y) in e.transpose().iter().zip(expect) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn nilpotent_series_terminates() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 3.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0]);
        // I + A + A²/2
        let expect = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 8.0, 0.0, 1.0, 5.0, 0.0, 0.0, 1.0]);
        assert!((expm(&a) - expect).abs().max() < 1e-13);
    }

    #[test]
    fn semigroup_property() {
        let a = DMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let e1 = expm(&(&a * 0.3));
        let e2 = expm(&(&a * 0.6));
        let rel = (&e1 * &e1 - &e2).abs().max() / e2.abs().max();
        assert!(rel < 1e-12);
    }
}
