//! Batch rendering of head meshes into ear images.

use std::path::{Path, PathBuf};

use earmatch_core::anthro::FRAME_SIZE;
use earmatch_core::matcher::Side;
use earmatch_core::mesh::{render_ear, CameraSpec, EarRegion, TriangleMesh, Vec3};

use crate::corpus::LoadIssue;
use crate::fsutil::{file_stem, list_files};
use crate::imageio::write_gray_png;
use crate::stl::read_stl;
use crate::tables::write_table;
use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    pub zoom: f64,
    pub fov_y_deg: f64,
    /// Toward the light, in camera space; `(0, 0, 1)` shines straight at
    /// the ear.
    pub light_direction: Vec3,
    /// Ear box in mesh coordinates; derived from each mesh's bounds when
    /// absent.
    pub region: Option<EarRegion>,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            zoom: 1.0,
            fov_y_deg: 30.0,
            light_direction: Vec3::new(0.0, 0.0, 1.0),
            region: None,
        }
    }
}

pub fn camera_for(
    mesh: &TriangleMesh,
    side: Side,
    settings: &RenderSettings,
) -> Result<CameraSpec> {
    let region = match settings.region {
        Some(r) => r,
        None => EarRegion::auto(mesh, side).ok_or(earmatch_core::Error::EmptyMesh)?,
    };
    let mut cam = CameraSpec::for_side(side, &region);
    let base = cam.focal_px();
    cam.fov_y_deg = settings.fov_y_deg;
    // Keep the ear framing of the default field of view for any fov.
    cam.distance *= cam.focal_px() / base;
    cam.zoom = settings.zoom;
    cam.light_direction = settings.light_direction;
    cam.width = FRAME_SIZE;
    cam.height = FRAME_SIZE;
    Ok(cam)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedImage {
    pub subject_id: String,
    pub side: Side,
    pub image_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RenderReport {
    pub images: Vec<RenderedImage>,
    pub failures: Vec<LoadIssue>,
}

pub fn image_name(subject_id: &str, side: Side) -> String {
    format!("{subject_id}_{}.png", side.tag())
}

fn render_mesh(
    path: &Path,
    settings: &RenderSettings,
    out_dir: &Path,
) -> Result<Vec<RenderedImage>> {
    let mesh = read_stl(path)?;
    let subject_id = file_stem(path);
    [Side::Left, Side::Right]
        .into_iter()
        .map(|side| {
            let cam = camera_for(&mesh, side, settings)?;
            let render = render_ear(&mesh, &cam, side)?;
            let image_path = out_dir.join(image_name(&subject_id, side));
            write_gray_png(&image_path, &render.image)?;
            Ok(RenderedImage {
                subject_id: subject_id.clone(),
                side,
                image_path,
            })
        })
        .collect()
}

/// Renders both ears of every `.stl` in `mesh_dir` (sorted by name) to
/// `out_dir/SUBJECT_{L,R}.png` and writes `out_dir/manifest.csv`. Failing
/// meshes are reported and skipped.
pub fn batch_render(
    mesh_dir: &Path,
    settings: &RenderSettings,
    out_dir: &Path,
) -> Result<RenderReport> {
    if !mesh_dir.is_dir() {
        return Err(Error::Config(format!(
            "mesh directory {} does not exist",
            mesh_dir.display()
        )));
    }
    let meshes = list_files(mesh_dir, &["stl"])?;
    let results = par::map(&meshes, |p| render_mesh(p, settings, out_dir));
    let mut report = RenderReport::default();
    for (path, result) in meshes.into_iter().zip(results) {
        match result {
            Ok(images) => report.images.extend(images),
            Err(e) => report.failures.push(LoadIssue {
                path,
                detail: e.to_string(),
            }),
        }
    }
    write_table(
        &out_dir.join("manifest.csv"),
        &["subject_id", "side", "image_path"],
        report.images.iter().map(|r| {
            let name = r
                .image_path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            vec![r.subject_id.clone(), r.side.as_str().to_string(), name]
        }),
    )?;
    Ok(report)
}
