use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::io::check_schema;
use super::{generate_scenes, load_scene, save_scene, GeneratorConfig, Scene};
use crate::error::{Error, Result};
use crate::exec::Exec;

pub const DATASET_SCHEMA: &str = "esgnn-dataset/1";
const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Val, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            _ => Err(Error::Config(format!("unknown split {s:?} (train, val, test)"))),
        }
    }
}

/// Scene counts `[train, val, test]` for `n` scenes. Validation and test get
/// `floor(fraction · n)`; training takes the remainder.
pub fn split_counts(n: usize, fractions: [f64; 3]) -> Result<[usize; 3]> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::Config(format!("split fractions {fractions:?} must lie in [0, 1]")));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::Config(format!("split fractions {fractions:?} sum to {total}, not 1")));
    }
    // tolerate representation error such as 0.15 * 100 = 15.000000000000002
    let part = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
    let val = part(fractions[1]);
    let test = part(fractions[2]);
    Ok([n - val - test, val, test])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub seed: u64,
    pub fractions: [f64; 3],
    pub generator: GeneratorConfig,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Manifest {
    pub fn files(&self, split: SplitName) -> &[String] {
        match split {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }
}

/// A generated corpus on disk: scene files plus `manifest.json`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    /// Generate `count` scenes into `dir`. A non-empty directory is refused
    /// unless `force` is set, in which case it is cleared first.
    pub fn create(
        dir: &Path,
        config: &GeneratorConfig,
        seed: u64,
        count: usize,
        fractions: [f64; 3],
        force: bool,
        exec: Exec,
    ) -> Result<Dataset> {
        let counts = split_counts(count, fractions)?;
        config.validate()?;
        if dir.exists() {
            let mut entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
            if entries.next().is_some() {
                if !force {
                    return Err(Error::Refused(format!(
                        "output directory {} is not empty (use --force to overwrite)",
                        dir.display()
                    )));
                }
                std::fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
        }
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let scenes = generate_scenes(config, seed, count, exec)?;
        let names: Vec<String> = scenes.iter().map(|s| format!("{}.json", s.id)).collect();
        exec.map_range(count, |k| save_scene(&scenes[k], &dir.join(&names[k])))
            .into_iter()
            .collect::<Result<Vec<()>>>()?;

        let manifest = Manifest {
            schema: DATASET_SCHEMA.into(),
            seed,
            fractions,
            generator: config.clone(),
            train: names[..counts[0]].to_vec(),
            val: names[counts[0]..counts[0] + counts[1]].to_vec(),
            test: names[counts[0] + counts[1]..].to_vec(),
        };
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialization cannot fail");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(Dataset { dir: dir.to_path_buf(), manifest })
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let context = path.display().to_string();
        check_schema(&text, &context, DATASET_SCHEMA)?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::parse(&context, &e))?;
        Ok(Dataset { dir: dir.to_path_buf(), manifest })
    }

    /// Load every scene of a split, in manifest order.
    pub fn split(&self, name: SplitName, exec: Exec) -> Result<Vec<Scene>> {
        exec.map(self.manifest.files(name), |f| load_scene(&self.dir.join(f)))
            .into_iter()
            .collect()
    }
}
