//! Patch extraction for 2-D convolution. A convolution is `im2col` followed
//! by a matmul with the `[C_out, k·k·C_in]` kernel matrix.

use super::{Backward, Result, Tensor, TensorError, Var};

/// Geometry of a square-kernel convolution over `H × W × C` (channel-last)
/// inputs with symmetric zero padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.pad - self.kernel) / self.stride + 1
    }

    /// Columns of one patch row, ordered `(ky, kx, c)`.
    pub fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.channels
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.kernel == 0 || self.stride == 0 || self.channels == 0 {
            return Err(format!("degenerate geometry {self:?}"));
        }
        if self.height + 2 * self.pad < self.kernel || self.width + 2 * self.pad < self.kernel {
            return Err(format!("kernel larger than padded input in {self:?}"));
        }
        Ok(())
    }

    /// Calls `f(row, col, src)` for every patch entry that reads a real
    /// (non-padding) pixel of image `b`.
    fn for_each(&self, b: usize, mut f: impl FnMut(usize, usize, usize)) {
        let (oh, ow, k, ch) = (self.out_height(), self.out_width(), self.kernel, self.channels);
        let per_image = self.height * self.width * ch;
        for oy in 0..oh {
            for ox in 0..ow {
                let row = (b * oh + oy) * ow + ox;
                for ky in 0..k {
                    let y = (oy * self.stride + ky) as isize - self.pad as isize;
                    if y < 0 || y >= self.height as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let x = (ox * self.stride + kx) as isize - self.pad as isize;
                        if x < 0 || x >= self.width as isize {
                            continue;
                        }
                        let src = b * per_image + (y as usize * self.width + x as usize) * ch;
                        let col = (ky * k + kx) * ch;
                        for c in 0..ch {
                            f(row, col + c, src + c);
                        }
                    }
                }
            }
        }
    }
}

struct Im2ColBackward {
    geom: ConvGeom,
    batch: usize,
}

impl Backward for Im2ColBackward {
    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let cols = self.geom.patch_len();
        let mut g = vec![0.0; inputs[0].len()];
        for b in 0..self.batch {
            self.geom.for_each(b, |row, col, src| g[src] += grad[row * cols + col]);
        }
        vec![Some(g)]
    }
}

impl<'t> Var<'t> {
    /// `[B, H·W·C]` images to `[B·H_out·W_out, k·k·C]` patches.
    pub fn im2col(&self, geom: ConvGeom) -> Result<Var<'t>> {
        geom.check().map_err(|msg| TensorError::Invalid { op: "im2col", msg })?;
        let per_image = geom.height * geom.width * geom.channels;
        let value = self.with_value(|x| {
            let batch = match x.shape() {
                [b, n] if *n == per_image => *b,
                other => {
                    return Err(TensorError::Invalid {
                        op: "im2col",
                        msg: format!("expected [B, {per_image}], got {other:?}"),
                    })
                }
            };
            let rows = batch * geom.out_height() * geom.out_width();
            let cols = geom.patch_len();
            let mut out = vec![0.0; rows * cols];
            for b in 0..batch {
                geom.for_each(b, |row, col, src| out[row * cols + col] = x.data()[src]);
            }
            Ok((batch, Tensor::new(vec![rows, cols], out)?))
        });
        let (batch, value) = value?;
        self.tape()
            .custom("im2col", &[*self], value, Box::new(Im2ColBackward { geom, batch }))
    }
}
