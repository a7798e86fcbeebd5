use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use inputmix::frame::{Frame, Video};
use inputmix::media_io::{load_video, read_frame_file, SequenceSource};
use inputmix::synth::{generate, SceneKind, SceneSpec};
use inputmix::Error;
use serde::{Deserialize, Serialize};

use crate::args::InputArgs;
use crate::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one run, written beside its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    pub profile: Option<String>,
    pub seed: u64,
    pub out: String,
    /// Arguments exactly as given, without the program name.
    pub flags: Vec<String>,
    /// Files written by the run, relative to `out`.
    pub outputs: Vec<String>,
}

/// Collects output files so a single writer owns the directory.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| io_error(root, e))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        }
        fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
        self.record(rel);
        Ok(path)
    }

    /// Note a file written by other means.
    pub fn record(&mut self, rel: &str) {
        self.written.push(rel.to_string());
    }

    pub fn finish(mut self, command: &str, seed: u64, inputs: Vec<String>, profile: Option<&Path>) -> CliResult<()> {
        let manifest = RunManifest {
            command: command.to_string(),
            inputs,
            profile: profile.map(|p| p.display().to_string()),
            seed,
            out: self.root.display().to_string(),
            flags: std::env::args().skip(1).collect(),
            outputs: std::mem::take(&mut self.written),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let path = self.path(MANIFEST_FILE);
        fs::write(&path, text + "\n").map_err(|e| io_error(&path, e))
    }
}

pub fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Lib(Error::IoFailure {
        path: path.to_path_buf(),
        source,
    })
}

/// One corpus entry: a sequence directory or a synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum CorpusEntry {
    Path {
        path: PathBuf,
    },
    Synthetic {
        synthetic: String,
        seed: u64,
        #[serde(default)]
        frames: Option<usize>,
        #[serde(default)]
        width: Option<usize>,
        #[serde(default)]
        height: Option<usize>,
    },
}

/// Corpus manifest JSON: `{"id": ..., "videos": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corpus {
    pub id: String,
    pub videos: Vec<CorpusEntry>,
}

impl Corpus {
    pub fn load(path: &Path) -> CliResult<(Corpus, Vec<Video>)> {
        let text = fs::read_to_string(path).map_err(|_| CliError::Lib(Error::FileMissing(path.to_path_buf())))?;
        let corpus: Corpus = serde_json::from_str(&text).map_err(|e| {
            CliError::Lib(Error::MalformedHeader {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let videos = corpus
            .videos
            .iter()
            .map(|entry| match entry {
                CorpusEntry::Path { path } => read_sequence(&base.join(path)),
                CorpusEntry::Synthetic {
                    synthetic,
                    seed,
                    frames,
                    width,
                    height,
                } => {
                    let kind: SceneKind = synthetic.parse()?;
                    let d = SceneSpec::new(kind, *seed);
                    Ok(generate(&SceneSpec {
                        frames: frames.unwrap_or(d.frames),
                        width: width.unwrap_or(d.width),
                        height: height.unwrap_or(d.height),
                        ..d
                    }))
                }
            })
            .collect::<inputmix::Result<Vec<_>>>()?;
        Ok((corpus, videos))
    }
}

fn read_sequence(dir: &Path) -> inputmix::Result<Video> {
    let id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    load_video(&SequenceSource::discover(dir)?, id)
}

/// Load the video named by the input flags, plus a description for the manifest.
pub fn load_input(input: &InputArgs, seed: u64) -> CliResult<(Video, String)> {
    match (&input.input, input.synthetic) {
        (Some(dir), None) => Ok((read_sequence(dir)?, dir.display().to_string())),
        (None, Some(kind)) => {
            let video = generate(&SceneSpec {
                width: input.width,
                height: input.height,
                frames: input.frames,
                ..SceneSpec::new(kind.into(), seed)
            });
            let desc = format!("synthetic:{}:{}x{}x{}", video.id(), input.width, input.height, input.frames);
            Ok((video, desc))
        }
        _ => Err(CliError::Usage("give exactly one of --input or --synthetic".into())),
    }
}

/// Frames of an inpainted run directory, keyed by index.
pub fn read_run(dir: &Path) -> CliResult<BTreeMap<usize, Frame>> {
    let frames_dir = dir.join("frames");
    let entries = fs::read_dir(&frames_dir).map_err(|_| CliError::Lib(Error::FileMissing(frames_dir.clone())))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| io_error(&frames_dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("ppm") {
            continue;
        }
        let Some(t) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse().ok()) else {
            continue;
        };
        out.insert(t, read_frame_file(&path, t)?);
    }
    if out.is_empty() {
        return Err(CliError::Lib(Error::FileMissing(frames_dir)));
    }
    Ok(out)
}
