//! Sources of per-frame feature maps.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::Command;

use crate::error::{Error, Result};
use crate::siam::FeatureMap;
use crate::tensor::Tensor3;

pub trait FeatureProvider {
    fn feature(&mut self, frame: u64) -> Result<FeatureMap>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageGeometry {
    pub stride: f64,
    pub width: f64,
    pub height: f64,
}

impl ImageGeometry {
    fn wrap(&self, tensor: Tensor3) -> Result<FeatureMap> {
        FeatureMap::new(tensor, self.stride, self.width, self.height)
    }
}

/// One FT1 file per frame, indexed by frame number.
pub struct Ft1Provider {
    paths: Vec<PathBuf>,
    geometry: ImageGeometry,
}

impl Ft1Provider {
    pub fn new(paths: Vec<PathBuf>, geometry: ImageGeometry) -> Self {
        Self { paths, geometry }
    }
}

impl FeatureProvider for Ft1Provider {
    fn feature(&mut self, frame: u64) -> Result<FeatureMap> {
        let path = usize::try_from(frame)
            .ok()
            .and_then(|i| self.paths.get(i))
            .ok_or_else(|| Error::Sequencing(format!("no feature file for frame {frame}")))?;
        let tensor = Tensor3::read_ft1(BufReader::new(File::open(path)?))?;
        self.geometry.wrap(tensor)
    }
}

/// Images used directly as stride-1 features.
pub struct InMemoryProvider {
    frames: Vec<Tensor3>,
}

impl InMemoryProvider {
    pub fn new(frames: Vec<Tensor3>) -> Self {
        Self { frames }
    }
}

impl FeatureProvider for InMemoryProvider {
    fn feature(&mut self, frame: u64) -> Result<FeatureMap> {
        usize::try_from(frame)
            .ok()
            .and_then(|i| self.frames.get(i))
            .map(|t| FeatureMap::photometric(t.clone()))
            .ok_or_else(|| Error::Sequencing(format!("no image for frame {frame}")))
    }
}

/// Runs a command per frame that writes an FT1 file. Arguments may contain
/// `{frame}` and `{out}` placeholders.
pub struct ExternalProvider {
    command: Vec<String>,
    scratch: PathBuf,
    geometry: ImageGeometry,
}

impl ExternalProvider {
    pub fn new(command: Vec<String>, scratch: PathBuf, geometry: ImageGeometry) -> Result<Self> {
        if command.is_empty() {
            return Err(Error::Config("feature command is empty".into()));
        }
        Ok(Self { command, scratch, geometry })
    }
}

impl FeatureProvider for ExternalProvider {
    fn feature(&mut self, frame: u64) -> Result<FeatureMap> {
        let out = self.scratch.join(format!("tio-feature-{}-{frame}.ft1", std::process::id()));
        let out_str = out.to_string_lossy();
        let args: Vec<String> = self
            .command
            .iter()
            .map(|a| a.replace("{frame}", &frame.to_string()).replace("{out}", &out_str))
            .collect();
        let status = Command::new(&args[0]).args(&args[1..]).status()?;
        if !status.success() {
            return Err(Error::Format(format!("feature command failed on frame {frame}: {status}")));
        }
        let tensor = Tensor3::read_ft1(BufReader::new(File::open(&out)?));
        let _ = std::fs::remove_file(&out);
        self.geometry.wrap(tensor?)
    }
}
