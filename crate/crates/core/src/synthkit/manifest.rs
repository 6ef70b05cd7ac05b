use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::scene::{render_scene, BoxLabel, SceneSpec};
use crate::error::{Error, Result};
use crate::geometry::BoxCoords;
use crate::image::Image;
use crate::rng::derive_seed;

const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|sp| sp.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub split: Split,
    pub count: usize,
    /// Items of this split use seeds `first_seed .. first_seed + count`.
    pub first_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub split: Split,
    pub index: usize,
    pub seed: u64,
    pub labels: Vec<BoxLabel>,
}

impl ManifestRecord {
    pub fn render(&self, spec: &SceneSpec) -> Result<Image> {
        render_scene(spec, self.seed).map(|(img, _)| img)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub global_seed: u64,
    pub spec: SceneSpec,
    pub spec_hash: String,
    pub splits: Vec<SplitInfo>,
    pub records: Vec<ManifestRecord>,
}

pub fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest[..8].iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn spec_hash(spec: &SceneSpec) -> String {
    short_hash(serde_json::to_string(spec).expect("spec serializes").as_bytes())
}

/// Renders every item once to record its labels. Splits occupy consecutive,
/// non-overlapping seed ranges derived from `seed`.
pub fn generate_dataset(spec: &SceneSpec, counts: SplitCounts, seed: u64) -> Result<DatasetManifest> {
    spec.validate()?;
    if counts.train == 0 || counts.val == 0 || counts.test == 0 {
        return Err(Error::SceneSpec("split counts must be positive".into()));
    }
    let base = derive_seed(seed, &[0x5eed]);
    let mut next = base;
    let mut splits = Vec::new();
    let mut records = Vec::new();
    for split in Split::ALL {
        let count = counts.get(split);
        splits.push(SplitInfo {
            split,
            count,
            first_seed: next,
        });
        for index in 0..count {
            let item_seed = next.wrapping_add(index as u64);
            let (_, labels) = render_scene(spec, item_seed)?;
            records.push(ManifestRecord {
                split,
                index,
                seed: item_seed,
                labels,
            });
        }
        next = next.wrapping_add(count as u64);
    }
    Ok(DatasetManifest {
        global_seed: seed,
        spec: spec.clone(),
        spec_hash: spec_hash(spec),
        splits,
        records,
    })
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn split_records(&self, split: Split) -> Vec<&ManifestRecord> {
        self.split(split).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    /// Serializes to the line-oriented text format:
    ///
    /// ```text
    /// item <split> <index> <seed> <spec_hash> <n> [<class_id> <cx> <cy> <w> <h>]*
    /// ```
    ///
    /// preceded by header lines (`version`, `global_seed`, `spec`, `spec_hash`, `split`).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# gando dataset manifest");
        let _ = writeln!(out, "version {MANIFEST_VERSION}");
        let _ = writeln!(out, "global_seed {}", self.global_seed);
        let _ = writeln!(
            out,
            "spec {}",
            serde_json::to_string(&self.spec).expect("spec serializes")
        );
        let _ = writeln!(out, "spec_hash {}", self.spec_hash);
        for s in &self.splits {
            let _ = writeln!(out, "split {} {} {}", s.split.name(), s.count, s.first_seed);
        }
        for r in &self.records {
            let _ = write!(
                out,
                "item {} {} {} {} {}",
                r.split.name(),
                r.index,
                r.seed,
                self.spec_hash,
                r.labels.len()
            );
            for l in &r.labels {
                let b = l.bbox;
                let _ = write!(out, " {} {} {} {} {}", l.class_id, b.cx, b.cy, b.w, b.h);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut global_seed = None;
        let mut spec: Option<SceneSpec> = None;
        let mut hash = None;
        let mut splits = Vec::new();
        let mut records = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line_no = ln + 1;
            let err = |msg: &str| Error::Manifest {
                line: line_no,
                msg: msg.to_string(),
            };
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = line.split_once(' ').ok_or_else(|| err("missing value"))?;
            match key {
                "version" => {
                    if rest.trim() != MANIFEST_VERSION.to_string() {
                        return Err(err("unsupported manifest version"));
                    }
                }
                "global_seed" => global_seed = Some(rest.trim().parse().map_err(|_| err("bad seed"))?),
                "spec" => spec = Some(serde_json::from_str(rest).map_err(|e| err(&e.to_string()))?),
                "spec_hash" => hash = Some(rest.trim().to_string()),
                "split" => {
                    let f: Vec<&str> = rest.split_whitespace().collect();
                    if f.len() != 3 {
                        return Err(err("split needs name, count, first seed"));
                    }
                    splits.push(SplitInfo {
                        split: Split::parse(f[0]).ok_or_else(|| err("unknown split"))?,
                        count: f[1].parse().map_err(|_| err("bad count"))?,
                        first_seed: f[2].parse().map_err(|_| err("bad seed"))?,
                    });
                }
                "item" => {
                    let f: Vec<&str> = rest.split_whitespace().collect();
                    if f.len() < 5 {
                        return Err(err("truncated item"));
                    }
                    let split = Split::parse(f[0]).ok_or_else(|| err("unknown split"))?;
                    let index = f[1].parse().map_err(|_| err("bad index"))?;
                    let seed = f[2].parse().map_err(|_| err("bad seed"))?;
                    if Some(f[3]) != hash.as_deref() {
                        return Err(err("item spec hash does not match header"));
                    }
                    let n: usize = f[4].parse().map_err(|_| err("bad label count"))?;
                    if f.len() != 5 + 5 * n {
                        return Err(err("label count does not match fields"));
                    }
                    let num = |s: &str| s.parse::<f64>().map_err(|_| err("bad number"));
                    let labels = f[5..]
                        .chunks_exact(5)
                        .map(|c| {
                            Ok(BoxLabel {
                                class_id: c[0].parse().map_err(|_| err("bad class"))?,
                                bbox: BoxCoords::new(num(c[1])?, num(c[2])?, num(c[3])?, num(c[4])?),
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    records.push(ManifestRecord {
                        split,
                        index,
                        seed,
                        labels,
                    });
                }
                _ => return Err(err("unknown key")),
            }
        }
        let missing = |what: &str| Error::Manifest {
            line: 0,
            msg: format!("missing {what}"),
        };
        let spec = spec.ok_or_else(|| missing("spec"))?;
        let spec_hash = hash.ok_or_else(|| missing("spec_hash"))?;
        if spec_hash != self::spec_hash(&spec) {
            return Err(missing("matching spec_hash"));
        }
        Ok(Self {
            global_seed: global_seed.ok_or_else(|| missing("global_seed"))?,
            spec,
            spec_hash,
            splits,
            records,
        })
    }

    pub fn hash(&self) -> String {
        short_hash(self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact {
                path: path.to_path_buf(),
                hint: "run `gando generate-data` first".into(),
            },
            _ => Error::Io(e),
        })?;
        Self::from_text(&text)
    }

    /// Writes PNG copies of every item under `dir/<split>/<index>.png`.
    pub fn write_image_cache(&self, dir: &Path) -> Result<()> {
        for r in &self.records {
            let sub = dir.join(r.split.name());
            std::fs::create_dir_all(&sub)?;
            r.render(&self.spec)?.save_png(&sub.join(format!("{:05}.png", r.index)))?;
        }
        Ok(())
    }
}
