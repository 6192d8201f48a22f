use std::fmt::Debug;

use num_traits::{Float, NumCast};

/// Floating-point element type of the engine.
///
/// `f32` is the production type; `f64` exists for gradient oracles.
pub trait Scalar: Float + Debug + Default + Send + Sync + 'static {
    /// `C = A·B` (or `C += A·B` when `accumulate`) on strided row/column
    /// layouts. `A` is `m×k`, `B` is `k×n`, `C` is `m×n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (usize, usize),
        b: &[Self],
        b_strides: (usize, usize),
        c: &mut [Self],
        c_strides: (usize, usize),
        accumulate: bool,
    );

    fn from_f64(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("f64 is representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite or nan scalar converts to f64")
    }
}

fn check_extent(len: usize, rows: usize, cols: usize, strides: (usize, usize), name: &str) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows - 1) * strides.0 + (cols - 1) * strides.1;
    assert!(
        last < len,
        "gemm operand {name} out of bounds: last index {last}, len {len}"
    );
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_strides: (usize, usize),
                b: &[Self],
                b_strides: (usize, usize),
                c: &mut [Self],
                c_strides: (usize, usize),
                accumulate: bool,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                check_extent(a.len(), m, k, a_strides, "A");
                check_extent(b.len(), k, n, b_strides, "B");
                check_extent(c.len(), m, n, c_strides, "C");
                let beta = if accumulate { 1.0 } else { 0.0 };
                // SAFETY: every index touched by the kernel lies within the
                // slice extents checked above, and `c` is borrowed mutably
                // so it cannot alias `a` or `b`.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        a_strides.0 as isize,
                        a_strides.1 as isize,
                        b.as_ptr(),
                        b_strides.0 as isize,
                        b_strides.1 as isize,
                        beta,
                        c.as_mut_ptr(),
                        c_strides.0 as isize,
                        c_strides.1 as isize,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);
