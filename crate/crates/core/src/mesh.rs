//! Triangle meshes and a deterministic software rasterizer that renders a
//! head mesh into a framed ear image.
//!
//! Camera space is right-handed: x right, y up, z toward the viewer. The
//! camera sits at `(0, 0, distance)` looking at the origin, which is the
//! world-space `target`.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

use crate::matcher::Side;
use crate::raster::GrayRaster;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    fn min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    fn max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3 {
    pub rows: [Vec3; 3],
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 {
        rows: [
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ],
    };

    pub fn apply(&self, v: Vec3) -> Vec3 {
        Vec3::new(
            self.rows[0].dot(v),
            self.rows[1].dot(v),
            self.rows[2].dot(v),
        )
    }

    pub fn transpose(&self) -> Mat3 {
        let [a, b, c] = self.rows;
        Mat3 {
            rows: [
                Vec3::new(a.x, b.x, c.x),
                Vec3::new(a.y, b.y, c.y),
                Vec3::new(a.z, b.z, c.z),
            ],
        }
    }

    pub fn mul(&self, o: &Mat3) -> Mat3 {
        let t = o.transpose();
        Mat3 {
            rows: self
                .rows
                .map(|r| Vec3::new(r.dot(t.rows[0]), r.dot(t.rows[1]), r.dot(t.rows[2]))),
        }
    }

    /// Rotation by `angle` radians about a unit `axis` (Rodrigues).
    pub fn rotation(axis: Vec3, angle: f64) -> Mat3 {
        let (s, c) = (libm::sin(angle), libm::cos(angle));
        let Vec3 { x, y, z } = axis;
        let t = 1.0 - c;
        Mat3 {
            rows: [
                Vec3::new(t * x * x + c, t * x * y - s * z, t * x * z + s * y),
                Vec3::new(t * x * y + s * z, t * y * y + c, t * y * z - s * x),
                Vec3::new(t * x * z - s * y, t * y * z + s * x, t * z * z + c),
            ],
        }
    }
}

/// An indexed triangle mesh in one consistent length unit.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    normals: Option<Vec<Vec3>>,
}

impl TriangleMesh {
    pub fn new(
        vertices: Vec<Vec3>,
        triangles: Vec<[u32; 3]>,
        normals: Option<Vec<Vec3>>,
    ) -> Result<Self> {
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&index) = tri.iter().find(|&&i| i as usize >= vertices.len()) {
                return Err(Error::VertexIndexOutOfRange {
                    triangle: t,
                    index,
                    vertex_count: vertices.len(),
                });
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::DegenerateTriangle(t));
            }
        }
        if let Some(n) = &normals {
            if n.len() != triangles.len() {
                return Err(Error::LengthMismatch {
                    expected: triangles.len(),
                    got: n.len(),
                });
            }
        }
        Ok(Self {
            vertices,
            triangles,
            normals,
        })
    }

    /// Builds an indexed mesh from independent facets, merging vertices with
    /// bit-identical coordinates. Facets whose corners coincide are dropped.
    pub fn from_facets(facets: &[[Vec3; 3]], normals: Option<Vec<Vec3>>) -> Result<Self> {
        let mut index: BTreeMap<[u64; 3], u32> = BTreeMap::new();
        let mut vertices = Vec::new();
        let mut triangles = Vec::with_capacity(facets.len());
        let mut kept_normals = normals.as_ref().map(|_| Vec::with_capacity(facets.len()));
        for (f, facet) in facets.iter().enumerate() {
            let tri = facet.map(|v| {
                let key = [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
                *index.entry(key).or_insert_with(|| {
                    vertices.push(v);
                    (vertices.len() - 1) as u32
                })
            });
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                continue;
            }
            triangles.push(tri);
            if let (Some(out), Some(src)) = (kept_normals.as_mut(), normals.as_ref()) {
                out.push(src[f]);
            }
        }
        Self::new(vertices, triangles, kept_normals)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn corners(&self, t: usize) -> [Vec3; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.corners(t);
                0.5 * (b - a).cross(c - a).norm()
            })
            .sum()
    }

    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(
            self.vertices
                .iter()
                .fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v))),
        )
    }

    /// The mesh with every vertex (and stored normal) mapped through `m`.
    pub fn transformed(&self, m: &Mat3) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|&v| m.apply(v)).collect(),
            triangles: self.triangles.clone(),
            normals: self
                .normals
                .as_ref()
                .map(|n| n.iter().map(|&v| m.apply(v)).collect()),
        }
    }
}

/// Axis-aligned box around the pinna in mesh coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarRegion {
    pub min: Vec3,
    pub max: Vec3,
}

impl EarRegion {
    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    /// A default box for head meshes with y through the ears (left ear on
    /// +y) and z up: the outermost 10% of the head width on the requested
    /// side, 30% of the head height and length, centred on the head.
    pub fn auto(mesh: &TriangleMesh, side: Side) -> Option<EarRegion> {
        let (lo, hi) = mesh.bounds()?;
        let c = (lo + hi) * 0.5;
        let size = hi - lo;
        let (half_x, half_z) = (0.15 * size.x, 0.15 * size.z);
        let (y0, y1) = match side {
            Side::Left => (hi.y - 0.1 * size.y, hi.y),
            Side::Right => (lo.y, lo.y + 0.1 * size.y),
        };
        Some(EarRegion {
            min: Vec3::new(c.x - half_x, y0, c.z - half_z),
            max: Vec3::new(c.x + half_x, y1, c.z + half_z),
        })
    }
}

/// Perspective camera with a directional light.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraSpec {
    /// World to camera rotation; rows are the camera right, up and back axes.
    pub rotation: Mat3,
    /// World point mapped to the image centre.
    pub target: Vec3,
    /// Camera distance from `target` along the back axis.
    pub distance: f64,
    pub fov_y_deg: f64,
    /// Extra magnification on top of the field of view.
    pub zoom: f64,
    /// Unit vector toward the light, in camera space.
    pub light_direction: Vec3,
    pub width: u32,
    pub height: u32,
}

/// Fraction of the frame height the ear region fills at zoom 1.
pub const EAR_FRAME_FRACTION: f64 = 0.8;

impl CameraSpec {
    /// Looks at the ear on `side` from outside the head, with the light
    /// shining straight at the ear.
    pub fn for_side(side: Side, region: &EarRegion) -> CameraSpec {
        let up = Vec3::new(0.0, 0.0, 1.0);
        let back = match side {
            Side::Left => Vec3::new(0.0, 1.0, 0.0),
            Side::Right => Vec3::new(0.0, -1.0, 0.0),
        };
        let rotation = Mat3 {
            rows: [up.cross(back), up, back],
        };
        let mut cam = CameraSpec {
            rotation,
            target: region.center(),
            distance: 1.0,
            fov_y_deg: 30.0,
            zoom: 1.0,
            light_direction: Vec3::new(0.0, 0.0, 1.0),
            width: 224,
            height: 224,
        };
        let size = region.max - region.min;
        let extent = up.x.abs() * size.x + up.y.abs() * size.y + up.z.abs() * size.z;
        cam.distance = (extent / 2.0) / (EAR_FRAME_FRACTION * cam.half_fov_tan());
        cam
    }

    fn half_fov_tan(&self) -> f64 {
        libm::tan(self.fov_y_deg.to_radians() / 2.0)
    }

    /// Pixels per unit of `x / depth`.
    pub fn focal_px(&self) -> f64 {
        (self.height as f64 / 2.0) * self.zoom / self.half_fov_tan()
    }

    /// Camera-space position of a world point.
    pub fn to_camera(&self, v: Vec3) -> Vec3 {
        self.rotation.apply(v - self.target)
    }

    /// Continuous raster position and inverse depth of a camera-space point;
    /// `None` behind the camera.
    fn project(&self, p: Vec3) -> Option<(f64, f64, f64)> {
        let depth = self.distance - p.z;
        if depth <= 1e-9 * self.distance.abs().max(1.0) {
            return None;
        }
        let f = self.focal_px();
        Some((
            self.width as f64 / 2.0 + f * p.x / depth,
            self.height as f64 / 2.0 - f * p.y / depth,
            1.0 / depth,
        ))
    }

    /// The same view of a mesh transformed by `m`.
    pub fn transformed(&self, m: &Mat3) -> CameraSpec {
        CameraSpec {
            rotation: self.rotation.mul(&m.transpose()),
            target: m.apply(self.target),
            ..*self
        }
    }
}

/// A shaded rendering plus the set of pixels any triangle covered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EarRender {
    pub image: GrayRaster,
    /// 255 where a triangle was drawn, 0 for background.
    pub coverage: GrayRaster,
}

impl EarRender {
    pub fn mirror(&self) -> EarRender {
        EarRender {
            image: self.image.mirror(),
            coverage: self.coverage.mirror(),
        }
    }

    pub fn covered_pixels(&self) -> usize {
        self.coverage.as_bytes().iter().filter(|&&v| v != 0).count()
    }
}

/// Renders `mesh` and mirrors the left ear so both sides share one
/// orientation.
pub fn render_ear(mesh: &TriangleMesh, cam: &CameraSpec, side: Side) -> Result<EarRender> {
    let r = render(mesh, cam)?;
    Ok(match side {
        Side::Left => r.mirror(),
        Side::Right => r,
    })
}

/// Perspective rendering with a per-pixel z-buffer and flat Lambertian
/// shading `max(0, n·l)`; faces turned away from the camera render black.
pub fn render(mesh: &TriangleMesh, cam: &CameraSpec) -> Result<EarRender> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let light = cam
        .light_direction
        .normalized()
        .ok_or_else(|| Error::InvalidArgument("light direction must be non-zero".into()))?;
    let (w, h) = (cam.width as usize, cam.height as usize);
    let mut image = GrayRaster::new(cam.width, cam.height);
    let mut coverage = GrayRaster::new(cam.width, cam.height);
    let mut zbuf = vec![0.0f64; w * h];
    let eye = Vec3::new(0.0, 0.0, cam.distance);

    for t in 0..mesh.triangles().len() {
        let [a, b, c] = mesh.corners(t).map(|v| cam.to_camera(v));
        let Some(normal) = (b - a).cross(c - a).normalized() else {
            continue;
        };
        let shade = if normal.dot(eye - a) <= 0.0 {
            0.0
        } else {
            normal.dot(light).max(0.0)
        };
        let value = libm::round(255.0 * shade) as u8;
        let (Some(pa), Some(pb), Some(pc)) = (cam.project(a), cam.project(b), cam.project(c))
        else {
            continue;
        };
        let area = edge(pa, pb, pc.0, pc.1);
        if area == 0.0 || !area.is_finite() {
            continue;
        }
        let x0 = libm::floor(pa.0.min(pb.0).min(pc.0) - 0.5).max(0.0) as usize;
        let x1 = (libm::ceil(pa.0.max(pb.0).max(pc.0) - 0.5).min(w as f64 - 1.0)).max(-1.0);
        let y0 = libm::floor(pa.1.min(pb.1).min(pc.1) - 0.5).max(0.0) as usize;
        let y1 = (libm::ceil(pa.1.max(pb.1).max(pc.1) - 0.5).min(h as f64 - 1.0)).max(-1.0);
        if x1 < 0.0 || y1 < 0.0 {
            continue;
        }
        for py in y0..=y1 as usize {
            let sy = py as f64 + 0.5;
            for px in x0..=x1 as usize {
                let sx = px as f64 + 0.5;
                let w0 = edge(pb, pc, sx, sy) / area;
                let w1 = edge(pc, pa, sx, sy) / area;
                let w2 = edge(pa, pb, sx, sy) / area;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let inv_depth = w0 * pa.2 + w1 * pb.2 + w2 * pc.2;
                let i = py * w + px;
                if inv_depth > zbuf[i] {
                    zbuf[i] = inv_depth;
                    image.put(px as u32, py as u32, value);
                    coverage.put(px as u32, py as u32, 255);
                }
            }
        }
    }
    Ok(EarRender { image, coverage })
}

/// Twice the signed area of `(a, b, p)` in raster coordinates.
fn edge(a: (f64, f64, f64), b: (f64, f64, f64), px: f64, py: f64) -> f64 {
    (b.0 - a.0) * (py - a.1) - (b.1 - a.1) * (px - a.0)
}
