//! Bounds-checked strided matrix multiply on flat slices.

/// A strided 2-D window into a flat buffer.
#[derive(Debug, Clone, Copy)]
pub(crate) struct View {
    pub offset: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl View {
    pub fn new(offset: usize, row_stride: usize, col_stride: usize) -> Self {
        Self {
            offset,
            row_stride,
            col_stride,
        }
    }

    /// Row-major matrix with `cols` columns starting at `offset`.
    pub fn rows(offset: usize, cols: usize) -> Self {
        Self::new(offset, cols, 1)
    }

    /// Transpose of a row-major matrix with `cols` columns.
    pub fn transposed(offset: usize, cols: usize) -> Self {
        Self::new(offset, 1, cols)
    }

    /// Same window read as its transpose.
    pub fn t(self) -> Self {
        Self::new(self.offset, self.col_stride, self.row_stride)
    }

    fn check(&self, len: usize, rows: usize, cols: usize) {
        if rows == 0 || cols == 0 {
            return;
        }
        let last = self.offset + (rows - 1) * self.row_stride + (cols - 1) * self.col_stride;
        assert!(last < len, "matrix view out of bounds: {last} >= {len}");
    }
}

/// `c = alpha * a · b + beta * c` with `a: m×k`, `b: k×n`, `c: m×n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    av: View,
    b: &[f64],
    bv: View,
    beta: f64,
    c: &mut [f64],
    cv: View,
) {
    if m == 0 || n == 0 {
        return;
    }
    av.check(a.len(), m, k);
    bv.check(b.len(), k, n);
    cv.check(c.len(), m, n);
    // SAFETY: every element touched by the kernel lies inside the slices,
    // which the checks above establish from the offsets and strides; `c` is
    // an exclusive borrow so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr().add(av.offset),
            av.row_stride as isize,
            av.col_stride as isize,
            b.as_ptr().add(bv.offset),
            bv.row_stride as isize,
            bv.col_stride as isize,
            beta,
            c.as_mut_ptr().add(cv.offset),
            cv.row_stride as isize,
            cv.col_stride as isize,
        );
    }
}
