//! Depth frames on disk: `frame_NNN.pgm` (16-bit, mm), `frame_NNN_mask.pgm`
//! (8-bit, 0/255) and a `frame_NNN.json` sidecar with pose and intrinsics.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pgm::Greymap;
use super::{read_json, write_json};
use crate::error::{Error, Result};
use crate::fusion::DepthFrame;
use crate::pose::{pose_from_row_major, pose_to_row_major};
use crate::sensor::{CameraIntrinsics, IntrinsicsFile};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSidecar {
    /// world <- camera, 4x4 row-major
    pub pose: Vec<f64>,
    pub intrinsics: IntrinsicsFile,
    /// Depth image, relative to the sidecar. Defaults to `<stem>.pgm`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<String>,
    /// Defaults to `<stem>_mask.pgm`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

pub fn frame_stem(index: usize) -> String {
    format!("frame_{index:03}")
}

/// Writes the three files for one frame. Depth is rounded to whole mm.
pub fn write_frame(dir: &Path, index: usize, frame: &DepthFrame, seed: Option<u64>) -> Result<PathBuf> {
    let stem = frame_stem(index);
    let (w, h) = (frame.width(), frame.height());
    let depth = Greymap {
        width: w,
        height: h,
        maxval: u16::MAX,
        data: frame
            .depth()
            .iter()
            .map(|d| d.round().clamp(0.0, u16::MAX as f64) as u16)
            .collect(),
    };
    let mask = Greymap {
        width: w,
        height: h,
        maxval: 255,
        data: frame.mask().iter().map(|m| if *m { 255 } else { 0 }).collect(),
    };
    let depth_name = format!("{stem}.pgm");
    let mask_name = format!("{stem}_mask.pgm");
    depth.save(&dir.join(&depth_name))?;
    mask.save(&dir.join(&mask_name))?;
    let sidecar = FrameSidecar {
        pose: pose_to_row_major(frame.pose()).to_vec(),
        intrinsics: frame.intrinsics().to_file(),
        depth: Some(depth_name),
        mask: Some(mask_name),
        seed,
    };
    let path = dir.join(format!("{stem}.json"));
    write_json(&path, &sidecar)?;
    Ok(path)
}

pub fn read_frame(sidecar_path: &Path) -> Result<DepthFrame> {
    let sidecar: FrameSidecar = read_json(sidecar_path)?;
    let dir = sidecar_path.parent().unwrap_or(Path::new("."));
    let stem = sidecar_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidInput(format!("bad sidecar name {}", sidecar_path.display())))?;
    let depth_path = dir.join(sidecar.depth.clone().unwrap_or_else(|| format!("{stem}.pgm")));
    let mask_path = dir.join(sidecar.mask.clone().unwrap_or_else(|| format!("{stem}_mask.pgm")));
    let intrinsics = CameraIntrinsics::try_from(sidecar.intrinsics)?;
    let pose = pose_from_row_major(&sidecar.pose)?;

    let depth = Greymap::load(&depth_path)?;
    let mask = Greymap::load(&mask_path)?;
    let (w, h) = (intrinsics.x_res() as usize, intrinsics.y_res() as usize);
    for (g, p) in [(&depth, &depth_path), (&mask, &mask_path)] {
        if g.width != w || g.height != h {
            return Err(Error::InvalidInput(format!(
                "{} is {}x{}, intrinsics say {w}x{h}",
                p.display(),
                g.width,
                g.height
            )));
        }
    }
    DepthFrame::new(
        depth.data.iter().map(|d| *d as f64).collect(),
        mask.data.iter().map(|m| *m > 0).collect(),
        pose,
        intrinsics,
    )
}

/// All `frame_*.json` sidecars in `dir`, in name order.
pub fn read_frame_dir(dir: &Path) -> Result<Vec<DepthFrame>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for e in entries {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("frame_") && name.ends_with(".json") {
            paths.push(p);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidInput(format!("no frame_*.json in {}", dir.display())));
    }
    paths.iter().map(|p| read_frame(p)).collect()
}
