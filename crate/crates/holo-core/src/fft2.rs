//! Unitary 2D FFT helpers on `ndarray` storage.

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;

/// Unitary 2D DFT. `inverse = false` applies `e^{-ikx}` kernels, `true` the
/// conjugate. Both directions scale by `1/sqrt(w*h)`, so a forward/inverse
/// round trip is the identity and energy is preserved.
pub fn fft2(values: &Array2<Complex64>, inverse: bool) -> Array2<Complex64> {
    let (h, w) = values.dim();
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = if inverse {
        planner.plan_fft_inverse(w)
    } else {
        planner.plan_fft_forward(w)
    };
    let col_fft = if inverse {
        planner.plan_fft_inverse(h)
    } else {
        planner.plan_fft_forward(h)
    };

    let mut out = values.to_owned();
    for mut row in out.rows_mut() {
        row_fft.process(row.as_slice_mut().expect("owned arrays are row-contiguous"));
    }
    // columns through a scratch buffer; strided access but no transpose copies
    let mut column = vec![Complex64::new(0.0, 0.0); h];
    for i in 0..w {
        for (j, c) in column.iter_mut().enumerate() {
            *c = out[[j, i]];
        }
        col_fft.process(&mut column);
        for (j, c) in column.iter().enumerate() {
            out[[j, i]] = *c;
        }
    }

    let scale = 1.0 / ((w * h) as f64).sqrt();
    out.mapv_inplace(|v| v * scale);
    out
}

/// Swap array quadrants so the zero-frequency bin moves between index 0 and
/// the array center. For the even sizes this crate requires, the shift is its
/// own inverse.
pub fn fftshift(values: &Array2<Complex64>) -> Array2<Complex64> {
    let (h, w) = values.dim();
    Array2::from_shape_fn((h, w), |(j, i)| values[[(j + h / 2) % h, (i + w / 2) % w]])
}
