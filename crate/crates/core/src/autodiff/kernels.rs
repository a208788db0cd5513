//! Strided GEMM helpers over `matrixmultiply`.

/// A strided view of a row-major matrix block.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub rs: isize,
    pub cs: isize,
}

impl<'a> View<'a> {
    pub fn dense(data: &'a [f64], rows: usize, cols: usize) -> Self {
        Self {
            data,
            offset: 0,
            rows,
            cols,
            rs: cols as isize,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
            ..self
        }
    }
}

/// `out[block] = beta * out[block] + a @ b`, where `out` is addressed with
/// row stride `out_rs` starting at `out_offset`.
pub(crate) fn gemm(a: View<'_>, b: View<'_>, out: &mut [f64], out_offset: usize, out_rs: usize, beta: f64) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                out[out_offset + i * out_rs + j] *= beta;
            }
        }
        return;
    }
    // Bounds: the last touched element of each operand must be in range.
    let last = |v: &View<'_>| v.offset as isize + (v.rows as isize - 1) * v.rs + (v.cols as isize - 1) * v.cs;
    assert!((last(&a) as usize) < a.data.len());
    assert!((last(&b) as usize) < b.data.len());
    assert!(out_offset + (m - 1) * out_rs + n - 1 < out.len());
    // SAFETY: all three operands were bounds-checked above against the
    // strides passed to dgemm; out does not alias a or b (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr().add(a.offset),
            a.rs,
            a.cs,
            b.data.as_ptr().add(b.offset),
            b.rs,
            b.cs,
            beta,
            out.as_mut_ptr().add(out_offset),
            out_rs as isize,
            1,
        );
    }
}
