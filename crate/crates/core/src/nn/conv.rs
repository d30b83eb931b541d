//! Dilated "same" convolution via im2col + GEMM.
//!
//! Kernel taps whose offset falls entirely outside the feature map only ever
//! read zero padding, so they are dropped before building the column matrix.
//! For the widest context layers on small maps this removes most of the work.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use super::{shape_err, NnError, Scalar, Tensor};

/// Convolution geometry. Dilation follows the `(width, height)` convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `(kh, kw)`, both odd.
    pub kernel: (usize, usize),
    /// `(dw, dh)`.
    pub dilation: (usize, usize),
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: (usize, usize), dilation: (usize, usize)) -> Result<Self, NnError> {
        if kernel.0.is_multiple_of(2) || kernel.1.is_multiple_of(2) {
            return Err(NnError::Contract(format!("kernel {kernel:?} must be odd for same padding")));
        }
        if dilation.0 == 0 || dilation.1 == 0 || in_channels == 0 || out_channels == 0 {
            return Err(NnError::Contract("zero-sized convolution parameter".into()));
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            dilation,
        })
    }

    /// Zero padding `(ph, pw)` that preserves spatial size.
    pub fn padding(&self) -> (usize, usize) {
        (
            self.dilation.1 * (self.kernel.0 - 1) / 2,
            self.dilation.0 * (self.kernel.1 - 1) / 2,
        )
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel.0, self.kernel.1]
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel.0 * self.kernel.1
    }

    fn taps(&self, h: usize, w: usize) -> Vec<Tap> {
        let (ph, pw) = self.padding();
        let mut taps = Vec::new();
        for ky in 0..self.kernel.0 {
            for kx in 0..self.kernel.1 {
                let dy = (ky * self.dilation.1) as isize - ph as isize;
                let dx = (kx * self.dilation.0) as isize - pw as isize;
                if dy.unsigned_abs() < h && dx.unsigned_abs() < w {
                    taps.push(Tap { ky, kx, dy, dx });
                }
            }
        }
        taps
    }
}

#[derive(Debug, Clone, Copy)]
struct Tap {
    ky: usize,
    kx: usize,
    dy: isize,
    dx: isize,
}

/// Valid output range `[lo, hi)` along one axis for a tap offset.
fn span(offset: isize, len: usize) -> (usize, usize) {
    let lo = (-offset).max(0) as usize;
    let hi = (len as isize - offset).min(len as isize).max(0) as usize;
    (lo, hi.max(lo))
}

/// `cols[(ci * taps + t), y * w + x] = input[ci, y + dy, x + dx]` (0 outside).
fn im2col<T: Scalar>(input: &[T], channels: usize, h: usize, w: usize, taps: &[Tap], cols: &mut [T]) {
    let hw = h * w;
    cols.fill(T::zero());
    for ci in 0..channels {
        let plane = &input[ci * hw..(ci + 1) * hw];
        for (t, tap) in taps.iter().enumerate() {
            let row = &mut cols[(ci * taps.len() + t) * hw..(ci * taps.len() + t + 1) * hw];
            let (y0, y1) = span(tap.dy, h);
            let (x0, x1) = span(tap.dx, w);
            for y in y0..y1 {
                let src = ((y as isize + tap.dy) as usize) * w;
                let sx = (x0 as isize + tap.dx) as usize;
                row[y * w + x0..y * w + x1].copy_from_slice(&plane[src + sx..src + sx + (x1 - x0)]);
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds columns back into `grad`.
fn col2im<T: Scalar>(cols: &[T], channels: usize, h: usize, w: usize, taps: &[Tap], grad: &mut [T]) {
    let hw = h * w;
    for ci in 0..channels {
        let plane = &mut grad[ci * hw..(ci + 1) * hw];
        for (t, tap) in taps.iter().enumerate() {
            let row = &cols[(ci * taps.len() + t) * hw..(ci * taps.len() + t + 1) * hw];
            let (y0, y1) = span(tap.dy, h);
            let (x0, x1) = span(tap.dx, w);
            for y in y0..y1 {
                let dst = ((y as isize + tap.dy) as usize) * w;
                let sx = (x0 as isize + tap.dx) as usize;
                for (g, &c) in plane[dst + sx..dst + sx + (x1 - x0)].iter_mut().zip(&row[y * w + x0..y * w + x1]) {
                    *g = *g + c;
                }
            }
        }
    }
}

/// `[Co, Ci * taps]` matrix of the active kernel entries.
fn gather_weights<T: Scalar>(weight: &[T], spec: &ConvSpec, taps: &[Tap]) -> Vec<T> {
    let (kh, kw) = spec.kernel;
    let mut wm = Vec::with_capacity(spec.out_channels * spec.in_channels * taps.len());
    for co in 0..spec.out_channels {
        for ci in 0..spec.in_channels {
            for tap in taps {
                wm.push(weight[((co * spec.in_channels + ci) * kh + tap.ky) * kw + tap.kx]);
            }
        }
    }
    wm
}

fn check_shapes<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>, spec: &ConvSpec) -> Result<[usize; 4], NnError> {
    let dims = input.dims4()?;
    if dims[1] != spec.in_channels {
        return Err(shape_err("conv2d input", input.shape(), &spec.weight_shape()));
    }
    if weight.shape() != spec.weight_shape() {
        return Err(shape_err("conv2d weight", weight.shape(), &spec.weight_shape()));
    }
    if bias.shape() != [spec.out_channels] {
        return Err(shape_err("conv2d bias", bias.shape(), &[spec.out_channels]));
    }
    Ok(dims)
}

fn view<T>(shape: (usize, usize), data: &[T]) -> ArrayView2<'_, T> {
    ArrayView2::from_shape(shape, data).expect("gemm operand sized by caller")
}

fn view_mut<T>(shape: (usize, usize), data: &mut [T]) -> ArrayViewMut2<'_, T> {
    ArrayViewMut2::from_shape(shape, data).expect("gemm operand sized by caller")
}

pub(crate) fn conv2d_forward<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>, spec: &ConvSpec) -> Result<Tensor<T>, NnError> {
    let [n, ci, h, w] = check_shapes(input, weight, bias, spec)?;
    let co = spec.out_channels;
    let hw = h * w;
    let taps = spec.taps(h, w);
    let k = ci * taps.len();
    let wm = gather_weights(weight.data(), spec, &taps);
    let mut cols = vec![T::zero(); k * hw];
    let mut out = Tensor::zeros(&[n, co, h, w]);
    for b in 0..n {
        let x = &input.data()[b * ci * hw..(b + 1) * ci * hw];
        let y = &mut out.data_mut()[b * co * hw..(b + 1) * co * hw];
        for (c, row) in y.chunks_exact_mut(hw).enumerate() {
            row.fill(bias.data()[c]);
        }
        if k == 0 {
            continue;
        }
        im2col(x, ci, h, w, &taps, &mut cols);
        general_mat_mul(T::one(), &view((co, k), &wm), &view((k, hw), &cols), T::one(), &mut view_mut((co, hw), y));
    }
    Ok(out)
}

/// Gradients with respect to input, weight and bias.
pub(crate) fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    spec: &ConvSpec,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let [n, ci, h, w] = input.dims4().expect("checked in forward");
    let co = spec.out_channels;
    let hw = h * w;
    let taps = spec.taps(h, w);
    let k = ci * taps.len();
    let wm = gather_weights(weight.data(), spec, &taps);
    let mut cols = vec![T::zero(); k * hw];
    let mut dcols = vec![T::zero(); k * hw];
    let mut dwm = vec![T::zero(); co * k];
    let mut dx = Tensor::zeros(input.shape());
    let mut db = vec![0.0f64; co];
    for b in 0..n {
        let g = &grad_out.data()[b * co * hw..(b + 1) * co * hw];
        for (c, row) in g.chunks_exact(hw).enumerate() {
            db[c] += row.iter().map(|v| v.as_f64()).sum::<f64>();
        }
        if k == 0 {
            continue;
        }
        let x = &input.data()[b * ci * hw..(b + 1) * ci * hw];
        im2col(x, ci, h, w, &taps, &mut cols);
        let gv = view((co, hw), g);
        general_mat_mul(T::one(), &gv, &view((k, hw), &cols).t(), T::one(), &mut view_mut((co, k), &mut dwm));
        general_mat_mul(T::one(), &view((co, k), &wm).t(), &gv, T::zero(), &mut view_mut((k, hw), &mut dcols));
        col2im(&dcols, ci, h, w, &taps, &mut dx.data_mut()[b * ci * hw..(b + 1) * ci * hw]);
    }
    let (kh, kw) = spec.kernel;
    let mut dw = Tensor::zeros(weight.shape());
    let dwd = dw.data_mut();
    for c_out in 0..co {
        for c_in in 0..ci {
            for (t, tap) in taps.iter().enumerate() {
                dwd[((c_out * ci + c_in) * kh + tap.ky) * kw + tap.kx] = dwm[c_out * k + c_in * taps.len() + t];
            }
        }
    }
    let db = Tensor::from_vec(&[co], db.into_iter().map(T::from_f64_lossy).collect()).expect("bias sized");
    (dx, dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padding_preserves_size_for_all_context_dilations() {
        for d in [(1, 1), (1, 2), (2, 4), (4, 8), (8, 16), (16, 32), (32, 64)] {
            let spec = ConvSpec::new(1, 1, (3, 3), d).unwrap();
            let (ph, pw) = spec.padding();
            assert_eq!((ph, pw), (d.1, d.0));
            let x = Tensor::<f64>::full(&[1, 1, 6, 10], 1.0);
            let y = conv2d_forward(&x, &Tensor::full(&[1, 1, 3, 3], 1.0), &Tensor::zeros(&[1]), &spec).unwrap();
            assert_eq!(y.shape(), x.shape());
        }
    }

    #[test]
    fn even_kernel_rejected() {
        assert!(ConvSpec::new(1, 1, (2, 3), (1, 1)).is_err());
    }

    #[test]
    fn far_taps_are_dropped() {
        let spec = ConvSpec::new(1, 1, (3, 3), (32, 64)).unwrap();
        assert_eq!(spec.taps(50, 25).len(), 1);
        assert_eq!(spec.taps(200, 100).len(), 9);
    }

    #[test]
    fn shape_mismatch_reports_both() {
        let spec = ConvSpec::new(2, 1, (3, 3), (1, 1)).unwrap();
        let err = conv2d_forward(
            &Tensor::<f32>::zeros(&[1, 3, 4, 4]),
            &Tensor::zeros(&[1, 2, 3, 3]),
            &Tensor::zeros(&[1]),
            &spec,
        )
        .unwrap_err();
        assert!(matches!(err, NnError::Shape { .. }));
    }
}
