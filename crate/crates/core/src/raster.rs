//! Minimal 8-bit rasters and bilinear resampling.
//!
//! Pixel `(i, j)` is centred on the continuous coordinate `(i, j)`, the
//! same frame landmarks use, so mirroring maps `x` to `width − 1 − x`.

use alloc::vec;
use alloc::vec::Vec;

/// Interleaved 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl Raster {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize * 3],
        }
    }

    /// Wraps row-major RGB bytes. Returns `None` when the length is wrong.
    pub fn from_rgb(width: u32, height: u32, data: Vec<u8>) -> Option<Self> {
        (data.len() == width as usize * height as usize * 3).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.data
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Channel value in [0, 1].
    pub fn normalized(&self, x: u32, y: u32, c: usize) -> f32 {
        self.data[(y as usize * self.width as usize + x as usize) * 3 + c] as f32 / 255.0
    }

    /// Bilinear sample at a continuous position; black outside the image.
    pub fn sample(&self, x: f64, y: f64) -> [f64; 3] {
        let x0 = libm::floor(x);
        let y0 = libm::floor(y);
        let fx = x - x0;
        let fy = y - y0;
        let mut out = [0.0; 3];
        for (dy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
            for (dx, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
                let w = wx * wy;
                if w == 0.0 {
                    continue;
                }
                let (xi, yi) = (x0 + dx, y0 + dy);
                if xi < 0.0 || yi < 0.0 || xi >= self.width as f64 || yi >= self.height as f64 {
                    continue;
                }
                let px = self.get(xi as u32, yi as u32);
                for c in 0..3 {
                    out[c] += w * px[c] as f64;
                }
            }
        }
        out
    }

    /// Builds a `width × height` raster where output pixel `(i, j)` samples
    /// this one at `inverse(i, j)`.
    pub fn resample(
        &self,
        width: u32,
        height: u32,
        inverse: impl Fn(f64, f64) -> (f64, f64),
    ) -> Raster {
        let mut out = Raster::new(width, height);
        for j in 0..height {
            for i in 0..width {
                let (sx, sy) = inverse(i as f64, j as f64);
                let v = self.sample(sx, sy);
                out.put(i, j, v.map(quantize));
            }
        }
        out
    }

    /// Mirror about the vertical axis.
    pub fn mirror(&self) -> Raster {
        let mut out = Raster::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                out.put(self.width - 1 - x, y, self.get(x, y));
            }
        }
        out
    }

    /// Resizes to `width × height` by bilinear sampling at scaled pixel
    /// positions; corners map to corners.
    pub fn resize(&self, width: u32, height: u32) -> Raster {
        let sx = if width > 1 {
            (self.width as f64 - 1.0) / (width as f64 - 1.0)
        } else {
            0.0
        };
        let sy = if height > 1 {
            (self.height as f64 - 1.0) / (height as f64 - 1.0)
        } else {
            0.0
        };
        self.resample(width, height, |i, j| (i * sx, j * sy))
    }

    /// Box-filter downscale by averaging; used to feed reduced networks.
    pub fn area_downsample(&self, width: u32, height: u32) -> Raster {
        let mut out = Raster::new(width, height);
        for j in 0..height {
            let y0 = j as u64 * self.height as u64 / height as u64;
            let y1 = ((j as u64 + 1) * self.height as u64).div_ceil(height as u64);
            for i in 0..width {
                let x0 = i as u64 * self.width as u64 / width as u64;
                let x1 = ((i as u64 + 1) * self.width as u64).div_ceil(width as u64);
                let mut acc = [0u64; 3];
                for y in y0..y1 {
                    for x in x0..x1 {
                        let p = self.get(x as u32, y as u32);
                        for c in 0..3 {
                            acc[c] += p[c] as u64;
                        }
                    }
                }
                let n = (y1 - y0) * (x1 - x0);
                out.put(i, j, acc.map(|a| ((a + n / 2) / n) as u8));
            }
        }
        out
    }
}

fn quantize(v: f64) -> u8 {
    libm::round(v.clamp(0.0, 255.0)) as u8
}

/// Single-channel 8-bit image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayRaster {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl GrayRaster {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn put(&mut self, x: u32, y: u32, v: u8) {
        self.data[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn mirror(&self) -> GrayRaster {
        let mut out = GrayRaster::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                out.put(self.width - 1 - x, y, self.get(x, y));
            }
        }
        out
    }

    /// Replicates the gray channel into RGB for the network.
    pub fn to_rgb(&self) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().flat_map(|&v| [v, v, v]).collect(),
        }
    }
}
