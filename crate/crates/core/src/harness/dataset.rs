//! Dataset directory layout:
//!
//! ```text
//! manifest.json              sha256 of every other file
//! scene.json                 spec, bounds, ground truth, init, warp, cameras
//! views/{kind}/{cam}/{t}.pfm target image (little-endian f32)
//! views/{kind}/{cam}/{t}.ppm 8-bit preview
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::synth::{Dataset, SynthSpec, Warp};
use crate::error::{Error, Result};
use crate::gauss4d::Gaussian4D;
use crate::optimloop::TrainView;
use crate::splat::{write_file, write_text, CameraView, Image, ViewKind};
use crate::stdf::SceneBounds;

pub const MANIFEST: &str = "manifest.json";
pub const SCENE: &str = "scene.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ViewRecord {
    camera: CameraView,
    camera_index: usize,
    image: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SceneDoc {
    spec: SynthSpec,
    bounds: SceneBounds,
    truth: Vec<Gaussian4D>,
    init: Vec<Gaussian4D>,
    /// Diagnostics only; training never reads it.
    warp: Warp,
    views: Vec<ViewRecord>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Relative path to lowercase hex sha256.
    pub files: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn kind_dir(kind: ViewKind) -> &'static str {
    kind.label()
}

pub fn image_path(kind: ViewKind, camera: usize, t_index: usize) -> String {
    format!("views/{}/{camera}/{t_index}.pfm", kind_dir(kind))
}

impl Dataset {
    pub fn write(&self, dir: &Path) -> Result<Manifest> {
        let records: Vec<ViewRecord> = self
            .views
            .iter()
            .zip(&self.camera_index)
            .map(|(v, &c)| ViewRecord {
                camera: v.view.clone(),
                camera_index: c,
                image: image_path(v.view.kind, c, v.view.t_index),
            })
            .collect();
        let hashed: Vec<(String, String)> = self
            .views
            .par_iter()
            .zip(&records)
            .map(|(v, r)| {
                let pfm = v.target.to_pfm()?;
                let ppm = v.target.to_ppm();
                let preview = r.image.replace(".pfm", ".ppm");
                write_file(&dir.join(&r.image), &pfm)?;
                write_file(&dir.join(&preview), &ppm)?;
                Ok(vec![(r.image.clone(), sha256_hex(&pfm)), (preview, sha256_hex(&ppm))])
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        let doc = SceneDoc {
            spec: self.spec.clone(),
            bounds: self.bounds,
            truth: self.truth.clone(),
            init: self.init.clone(),
            warp: self.warp.clone(),
            views: records,
        };
        let scene = serde_json::to_string_pretty(&doc)?;
        write_text(&dir.join(SCENE), &scene)?;
        let mut manifest = Manifest {
            files: hashed.into_iter().collect(),
        };
        manifest.files.insert(SCENE.into(), sha256_hex(scene.as_bytes()));
        write_text(&dir.join(MANIFEST), &serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }

    /// Read a dataset, refusing any file whose hash disagrees with the manifest.
    pub fn load(dir: &Path) -> Result<Dataset> {
        let manifest: Manifest = serde_json::from_slice(&read(&dir.join(MANIFEST))?)?;
        let scene_bytes = verified(dir, &manifest, SCENE)?;
        let doc: SceneDoc = serde_json::from_slice(&scene_bytes)?;

        let missing: Vec<String> = doc
            .views
            .iter()
            .filter(|r| !manifest.files.contains_key(&r.image) || !dir.join(&r.image).is_file())
            .map(|r| r.camera.id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingViews(missing));
        }
        let targets = doc
            .views
            .par_iter()
            .map(|r| Image::from_pfm(&verified(dir, &manifest, &r.image)?))
            .collect::<Result<Vec<_>>>()?;
        let camera_index = doc.views.iter().map(|r| r.camera_index).collect();
        let views = doc
            .views
            .into_iter()
            .zip(targets)
            .map(|(r, target)| TrainView {
                view: r.camera,
                target,
            })
            .collect();
        Ok(Dataset {
            spec: doc.spec,
            bounds: doc.bounds,
            truth: doc.truth,
            init: doc.init,
            warp: doc.warp,
            views,
            camera_index,
        })
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn verified(dir: &Path, manifest: &Manifest, rel: &str) -> Result<Vec<u8>> {
    let path: PathBuf = dir.join(rel);
    let bytes = read(&path)?;
    match manifest.files.get(rel) {
        Some(h) if *h == sha256_hex(&bytes) => Ok(bytes),
        _ => Err(Error::HashMismatch { path }),
    }
}
