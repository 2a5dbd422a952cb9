//! Synthetic corpus on disk: one frames file per clip, an index carrying
//! labels, kinematics and analytic curves, and a manifest.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::streams::{read_all_frames, write_frames};
use super::{jsonl_bytes, open_file, write_atomic, Header, JsonLines, Manifest, Role};
use crate::domain::Label;
use crate::error::{Error, Result};
use crate::par;
use crate::svm::GroupKey;
use crate::synthlab::{CorpusClip, Kinematics, Layout, ScenarioSpec, SyntheticClip};

pub const CORPUS: &str = "corpus";
pub const INDEX_FILE: &str = "corpus.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexLine {
    clip_id: String,
    group_key: GroupKey,
    frames: String,
    label: Label,
    spec: ScenarioSpec,
    kinematics: Kinematics,
    layout: Layout,
    normalizer: f64,
    analytic: Vec<f64>,
}

/// Writes the corpus under `dir` and returns the saved manifest.
pub fn write_corpus(dir: &Path, clips: &[CorpusClip]) -> Result<Manifest> {
    let files: Vec<String> = clips.iter().map(|c| format!("clips/{}.jsonl", c.clip_id)).collect();
    let jobs: Vec<(&CorpusClip, &String)> = clips.iter().zip(&files).collect();
    par::try_map(&jobs, |(c, f)| write_frames(&dir.join(f), &c.clip.meta, &c.clip.frames))?;
    let index = clips.iter().zip(&files).map(|(c, f)| IndexLine {
        clip_id: c.clip_id.clone(),
        group_key: c.group_key.clone(),
        frames: f.clone(),
        label: c.clip.label,
        spec: c.clip.spec.clone(),
        kinematics: c.clip.kinematics,
        layout: c.clip.layout,
        normalizer: c.clip.normalizer,
        analytic: c.clip.analytic.clone(),
    });
    write_atomic(&dir.join(INDEX_FILE), &jsonl_bytes(&Header::new(CORPUS, None), index)?)?;
    let mut manifest = Manifest::new(clips.first().map(|c| c.clip.meta.clone()));
    manifest.add(Role::Corpus, INDEX_FILE);
    for f in files {
        manifest.add(Role::Frames, f);
    }
    manifest.save(&dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Reads a corpus from its manifest.
pub fn read_corpus(manifest_path: &Path) -> Result<Vec<CorpusClip>> {
    let manifest = Manifest::load(manifest_path)?;
    let index_path = manifest
        .paths(Role::Corpus)
        .next()
        .map(|p| Manifest::resolve(manifest_path, p))
        .ok_or_else(|| Error::schema(0, "files", "manifest lists no corpus index"))?;
    let lines: Vec<IndexLine> = JsonLines::open(open_file(&index_path)?, CORPUS)?.1.collect_values()?;
    par::try_map(&lines, |l| {
        let (meta, frames) = read_all_frames(&Manifest::resolve(manifest_path, &l.frames))?;
        Ok(CorpusClip {
            clip_id: l.clip_id.clone(),
            group_key: l.group_key.clone(),
            clip: SyntheticClip {
                spec: l.spec.clone(),
                label: l.label,
                kinematics: l.kinematics,
                layout: l.layout,
                normalizer: l.normalizer,
                meta,
                frames,
                analytic: l.analytic.clone(),
            },
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthlab::{corpus, CorpusSpec};

    #[test]
    fn corpus_round_trips_exactly() {
        let spec = CorpusSpec {
            n_per_class: 1,
            seed: 3,
            fps: 10.0,
            min_duration_s: 6.0,
            max_duration_s: 7.0,
            ..CorpusSpec::default()
        };
        let clips = corpus(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = write_corpus(dir.path(), &clips).unwrap();
        assert_eq!(m.paths(Role::Frames).count(), clips.len());
        assert_eq!(read_corpus(&dir.path().join(MANIFEST_FILE)).unwrap(), clips);
    }
}
