//! Sequence manifests: which files make up one video.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::provider::{ExternalProvider, FeatureProvider, Ft1Provider, ImageGeometry};

/// Relative paths are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceManifest {
    pub sequence_id: String,
    pub frames: usize,
    pub image_width: f64,
    pub image_height: f64,
    pub stride: f64,
    /// One FT1 file per frame; unused when `feature_command` is set.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub features: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_command: Option<Vec<String>>,
    pub detections: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<PathBuf>,
}

impl SequenceManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut m: Self = serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new("."));
        m.resolve(base);
        m.validate()?;
        Ok(m)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.features.iter_mut().for_each(fix);
        fix(&mut self.detections);
        if let Some(a) = self.annotations.as_mut() {
            fix(a);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::Config("manifest frame count must be at least 1".into()));
        }
        if !(self.stride > 0.0 && self.image_width > 0.0 && self.image_height > 0.0) {
            return Err(Error::Config("manifest image dims and stride must be positive".into()));
        }
        if self.feature_command.is_none() && self.features.len() != self.frames {
            return Err(Error::Config(format!(
                "manifest lists {} feature files for {} frames",
                self.features.len(),
                self.frames
            )));
        }
        let missing = self
            .features
            .iter()
            .chain(std::iter::once(&self.detections))
            .chain(self.annotations.iter())
            .find(|p| !p.is_file());
        if let Some(p) = missing {
            return Err(Error::Config(format!("manifest references missing file {}", p.display())));
        }
        Ok(())
    }

    pub fn geometry(&self) -> ImageGeometry {
        ImageGeometry { stride: self.stride, width: self.image_width, height: self.image_height }
    }

    pub fn provider(&self) -> Result<Box<dyn FeatureProvider>> {
        Ok(match &self.feature_command {
            Some(cmd) => Box::new(ExternalProvider::new(cmd.clone(), std::env::temp_dir(), self.geometry())?),
            None => Box::new(Ft1Provider::new(self.features.clone(), self.geometry())),
        })
    }
}
