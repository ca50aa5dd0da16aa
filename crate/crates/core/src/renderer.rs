//! Orthographic isometric rendering of voxel solids to 8-bit grayscale.
//!
//! Each pixel casts a ray along `-view` through the occupancy grid and stops at
//! the first occupied cell (3D DDA in index space). Framing depends only on the
//! grid, so solids on the same grid share a camera.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::VoxelSolid;

pub const DEFAULT_SIZE: usize = 256;
pub const MIN_SIZE: usize = 16;
pub const NEAR_SHADE: u8 = 255;
pub const FAR_SHADE: u8 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RenderMode {
    Silhouette,
    #[default]
    DepthShaded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderSpec {
    pub width: usize,
    pub height: usize,
    pub mode: RenderMode,
}

impl Default for RenderSpec {
    fn default() -> Self {
        RenderSpec {
            width: DEFAULT_SIZE,
            height: DEFAULT_SIZE,
            mode: RenderMode::DepthShaded,
        }
    }
}

impl RenderSpec {
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.width < MIN_SIZE || self.height < MIN_SIZE {
            return Err(RenderError::TooSmall(self.width, self.height));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenderError {
    #[error("cannot render an empty solid")]
    EmptySolid,
    #[error("image size {0}x{1} below the {MIN_SIZE}px minimum")]
    TooSmall(usize, usize),
}

/// Unit view direction, toward the camera.
pub const VIEW: [f64; 3] = [
    0.577_350_269_189_625_8,
    0.577_350_269_189_625_8,
    0.577_350_269_189_625_8,
];

/// Image-plane axes: `right` horizontal, `up` vertical, both orthogonal to VIEW.
pub fn camera_axes() -> ([f64; 3], [f64; 3]) {
    let s2 = std::f64::consts::FRAC_1_SQRT_2;
    let s6 = 1.0 / 6f64.sqrt();
    ([-s2, s2, 0.0], [-s6, -s6, 2.0 * s6])
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Image-plane framing: world units per pixel and the center of the view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Framing {
    pub pixel_size: f64,
    pub center: [f64; 3],
    /// Depth range of the grid cube along VIEW.
    pub depth_min: f64,
    pub depth_max: f64,
}

/// Fits the projected grid cube into the image with one pixel to spare.
pub fn framing(s: &VoxelSolid, spec: &RenderSpec) -> Framing {
    let g = s.grid();
    let (right, up) = camera_axes();
    let side = g.cell_size * g.resolution as f64;
    let (mut umax, mut vmax) = (0.0f64, 0.0f64);
    let (mut dmin, mut dmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let c = g.center();
    for corner in 0..8 {
        let p: [f64; 3] = std::array::from_fn(|a| {
            let sign = if corner & (1 << a) != 0 { 0.5 } else { -0.5 };
            sign * side
        });
        umax = umax.max(dot(p, right).abs());
        vmax = vmax.max(dot(p, up).abs());
        let d = dot(p, VIEW) + dot(c, VIEW);
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    let pixel_size = (2.0 * umax / (spec.width - 2) as f64).max(2.0 * vmax / (spec.height - 2) as f64);
    Framing {
        pixel_size,
        center: c,
        depth_min: dmin,
        depth_max: dmax,
    }
}

/// Grayscale pixels, row-major from the top-left.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn foreground(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != 0).count()
    }

    /// Binary PGM (P5, maxval 255).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().expect("in-memory png header");
            w.write_image_data(&self.pixels).expect("in-memory png data");
        }
        out
    }

    pub fn write_pgm(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(&self.to_pgm())
    }
}

/// First occupied cell along the ray `origin + t·dir` (index space), returning
/// the entry parameter `t`.
fn march(s: &VoxelSolid, origin: [f64; 3], dir: [f64; 3]) -> Option<f64> {
    let r = s.resolution() as f64;
    // Clip to the grid box [0, r]^3.
    let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
    for a in 0..3 {
        if dir[a].abs() < 1e-300 {
            if origin[a] < 0.0 || origin[a] > r {
                return None;
            }
            continue;
        }
        let (ta, tb) = ((0.0 - origin[a]) / dir[a], (r - origin[a]) / dir[a]);
        t0 = t0.max(ta.min(tb));
        t1 = t1.min(ta.max(tb));
    }
    if t0 > t1 {
        return None;
    }
    let n = s.resolution();
    let p: [f64; 3] = std::array::from_fn(|a| origin[a] + t0 * dir[a]);
    let mut cell: [i64; 3] = std::array::from_fn(|a| (p[a].floor() as i64).clamp(0, n as i64 - 1));
    let step: [i64; 3] = std::array::from_fn(|a| if dir[a] > 0.0 { 1 } else { -1 });
    let delta: [f64; 3] = std::array::from_fn(|a| (1.0 / dir[a]).abs());
    let mut next: [f64; 3] = std::array::from_fn(|a| {
        let boundary = if dir[a] > 0.0 {
            cell[a] as f64 + 1.0
        } else {
            cell[a] as f64
        };
        (boundary - origin[a]) / dir[a]
    });
    let mut t = t0;
    loop {
        if s.is_occupied([cell[0] as usize, cell[1] as usize, cell[2] as usize]) {
            return Some(t);
        }
        // Lowest axis wins ties.
        let mut a = 0;
        for b in 1..3 {
            if next[b] < next[a] {
                a = b;
            }
        }
        t = next[a];
        cell[a] += step[a];
        if cell[a] < 0 || cell[a] >= n as i64 {
            return None;
        }
        next[a] += delta[a];
    }
}

pub fn render(s: &VoxelSolid, spec: &RenderSpec) -> Result<Image, RenderError> {
    spec.validate()?;
    if s.is_empty() {
        return Err(RenderError::EmptySolid);
    }
    let g = s.grid();
    let f = framing(s, spec);
    let (right, up) = camera_axes();
    let h = g.cell_size;
    // Rays start on the camera side of the grid and travel along -VIEW.
    let back = (f.depth_max - dot(f.center, VIEW)) + h;
    let dir_idx = VIEW.map(|x| -x);
    let mut pixels = vec![0u8; spec.width * spec.height];
    for py in 0..spec.height {
        let v = ((spec.height as f64) / 2.0 - (py as f64 + 0.5)) * f.pixel_size;
        for px in 0..spec.width {
            let u = ((px as f64 + 0.5) - (spec.width as f64) / 2.0) * f.pixel_size;
            let world: [f64; 3] = std::array::from_fn(|a| f.center[a] + u * right[a] + v * up[a] + back * VIEW[a]);
            let origin: [f64; 3] = std::array::from_fn(|a| (world[a] - g.origin[a]) / h);
            let Some(t) = march(s, origin, dir_idx) else {
                continue;
            };
            pixels[py * spec.width + px] = match spec.mode {
                RenderMode::Silhouette => 255,
                RenderMode::DepthShaded => {
                    let depth = dot(world, VIEW) - t * h;
                    let span = f.depth_max - f.depth_min;
                    let x = ((depth - f.depth_min) / span).clamp(0.0, 1.0);
                    let shade = FAR_SHADE as f64 + x * (NEAR_SHADE - FAR_SHADE) as f64;
                    shade.round() as u8
                }
            };
        }
    }
    Ok(Image {
        width: spec.width,
        height: spec.height,
        pixels,
    })
}

/// Projected area of a cube of side `a` along a body diagonal.
pub fn isometric_cube_area(a: f64) -> f64 {
    3f64.sqrt() * a * a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;
    use crate::executor::{execute, execute_on_grid};

    fn cube(r: usize) -> VoxelSolid {
        execute(&parse("rect 1 1\nextrude 1").unwrap(), r).unwrap()
    }

    #[test]
    fn cube_silhouette_area() {
        let s = cube(64);
        let spec = RenderSpec {
            mode: RenderMode::Silhouette,
            ..RenderSpec::default()
        };
        let img = render(&s, &spec).unwrap();
        let f = framing(&s, &spec);
        let side = s.cell_size() * 62.0;
        let expected = isometric_cube_area(side) / (f.pixel_size * f.pixel_size);
        let got = img.foreground() as f64;
        assert!((got - expected).abs() / expected < 0.03, "{got} vs {expected}");
    }

    #[test]
    fn depth_shading_range() {
        let img = render(&cube(32), &RenderSpec::default()).unwrap();
        let fg: Vec<u8> = img.pixels.iter().copied().filter(|&p| p != 0).collect();
        assert!(fg.iter().all(|&p| p >= FAR_SHADE));
        assert!(fg.iter().max() > fg.iter().min());
    }

    #[test]
    fn superset_has_superset_silhouette() {
        let big = cube(32);
        let small = execute_on_grid(&parse("rect 0.5 0.5\nextrude 0.5").unwrap(), big.grid()).unwrap();
        let spec = RenderSpec {
            mode: RenderMode::Silhouette,
            ..RenderSpec::default()
        };
        let (a, b) = (render(&big, &spec).unwrap(), render(&small, &spec).unwrap());
        assert!(b.pixels.iter().zip(&a.pixels).all(|(s, l)| *s == 0 || *l != 0));
    }

    #[test]
    fn errors_and_encodings() {
        let s = cube(16);
        assert_eq!(
            render(&VoxelSolid::empty(*s.grid()), &RenderSpec::default()),
            Err(RenderError::EmptySolid)
        );
        let small = RenderSpec {
            width: 8,
            ..RenderSpec::default()
        };
        assert_eq!(render(&s, &small), Err(RenderError::TooSmall(8, 256)));
        let img = render(&s, &RenderSpec::default()).unwrap();
        let pgm = img.to_pgm();
        assert!(pgm.starts_with(b"P5\n256 256\n255\n"));
        assert_eq!(pgm.len(), 15 + 256 * 256);
        assert_eq!(&img.to_png()[..8], b"\x89PNG\r\n\x1a\n");
    }
}
