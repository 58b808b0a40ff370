//! Centered, orthonormal 2D FFT.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::grid::ComplexGrid;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction))
}

/// Unnormalized in-place 2D FFT of a row-major `h x w` buffer.
pub(crate) fn fft2_raw(data: &mut [Complex64], h: usize, w: usize, direction: FftDirection) {
    debug_assert_eq!(data.len(), h * w);
    let row_fft = plan(w, direction);
    let mut scratch = vec![Complex64::default(); row_fft.get_inplace_scratch_len()];
    for row in data.chunks_exact_mut(w) {
        row_fft.process_with_scratch(row, &mut scratch);
    }
    let col_fft = plan(h, direction);
    let mut scratch = vec![Complex64::default(); col_fft.get_inplace_scratch_len()];
    let mut col = vec![Complex64::default(); h];
    for c in 0..w {
        for r in 0..h {
            col[r] = data[r * w + c];
        }
        col_fft.process_with_scratch(&mut col, &mut scratch);
        for r in 0..h {
            data[r * w + c] = col[r];
        }
    }
}

fn centered(grid: &ComplexGrid, direction: FftDirection) -> ComplexGrid {
    let (h, w) = grid.shape();
    let (ch, cw) = (h / 2, w / 2);
    // centered index i <-> offset i - n/2, stored at (i - n/2) mod n
    let mut buf = vec![Complex64::default(); h * w];
    for r in 0..h {
        let rr = (r + h - ch) % h;
        for c in 0..w {
            buf[rr * w + (c + w - cw) % w] = grid[(r, c)];
        }
    }
    fft2_raw(&mut buf, h, w, direction);
    let scale = 1.0 / ((h * w) as f64).sqrt();
    ComplexGrid::from_fn(h, w, |r, c| buf[((r + h - ch) % h) * w + (c + w - cw) % w] * scale)
}

/// Orthonormal DFT with both image origin and DC at index `(H/2, W/2)`.
pub fn fft2_centered(image: &ComplexGrid) -> ComplexGrid {
    centered(image, FftDirection::Forward)
}

pub fn ifft2_centered(kspace: &ComplexGrid) -> ComplexGrid {
    centered(kspace, FftDirection::Inverse)
}
