//! Resolving `--model` arguments to a steering policy.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use lanepilot_core::avoidance::{ExpertPolicy, SteeringPolicy};
use lanepilot_core::eval::ModelRef;
use lanepilot_core::nn::{decode_model, encode_model, ModelHeader, NetConfig, Network};
use serde::Serialize;

/// A ready policy plus the reference recorded in run logs.
pub struct LoadedModel {
    pub policy: Box<dyn SteeringPolicy + Send>,
    pub model: ModelRef,
}

impl std::fmt::Debug for LoadedModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LoadedModel").field("model", &self.model).finish()
    }
}

/// Frame size a profile's network consumes.
pub fn frame_size(profile: &str) -> anyhow::Result<(usize, usize)> {
    let cfg = NetConfig::from_profile(profile, 0)?;
    Ok((cfg.input_height, cfg.input_width))
}

/// `expert`, `init:<profile>:<seed>`, or a model file. Bare file names that
/// do not exist are looked up in `<data_dir>/models/`.
pub fn load_model(spec: &str, data_dir: Option<&Path>, profile: &str) -> anyhow::Result<LoadedModel> {
    if spec == "expert" {
        return Ok(LoadedModel {
            policy: Box::new(ExpertPolicy {
                frame_size: frame_size(profile)?,
            }),
            model: ModelRef::expert(),
        });
    }
    if let Some(rest) = spec.strip_prefix("init:") {
        let (prof, seed) = rest
            .split_once(':')
            .with_context(|| format!("expected init:<profile>:<seed>, got `{spec}`"))?;
        let seed: u64 = seed.parse().with_context(|| format!("bad seed in `{spec}`"))?;
        let net = Network::init(&NetConfig::from_profile(prof, seed)?)?;
        let model = ModelRef::from_bytes(spec, &encode_model(&net, None));
        return Ok(LoadedModel {
            policy: Box::new(net),
            model,
        });
    }
    let path = resolve_model_path(spec, data_dir)?;
    let bytes = std::fs::read(&path).with_context(|| format!("cannot read model {}", path.display()))?;
    let (net, _) = decode_model(&bytes).with_context(|| format!("invalid model file {}", path.display()))?;
    Ok(LoadedModel {
        policy: Box::new(net),
        model: ModelRef::from_bytes(format!("file:{}", path.display()), &bytes),
    })
}

fn resolve_model_path(spec: &str, data_dir: Option<&Path>) -> anyhow::Result<PathBuf> {
    let direct = PathBuf::from(spec);
    if direct.is_file() {
        return Ok(direct);
    }
    if let Some(dir) = data_dir {
        let p = dir.join("models").join(spec);
        if p.is_file() {
            return Ok(p);
        }
    }
    bail!("model `{spec}` not found")
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelInfo {
    pub name: String,
    pub digest: String,
    pub bytes: usize,
    pub header: ModelHeader,
}

/// Model files under `<data_dir>/models/`, sorted by name. Unreadable files
/// are skipped.
pub fn list_models(data_dir: &Path) -> Vec<ModelInfo> {
    let Ok(entries) = std::fs::read_dir(data_dir.join("models")) else {
        return Vec::new();
    };
    let mut out: Vec<ModelInfo> = entries
        .filter_map(Result::ok)
        .filter_map(|e| {
            let bytes = std::fs::read(e.path()).ok()?;
            let (_, header) = decode_model(&bytes).ok()?;
            Some(ModelInfo {
                name: e.file_name().to_string_lossy().into_owned(),
                digest: ModelRef::from_bytes("", &bytes).digest,
                bytes: bytes.len(),
                header,
            })
        })
        .collect();
    out.sort_by(|a, b| a.name.cmp(&b.name));
    out
}

/// Rebuilds the policy a run log names. `override_spec` replaces the
/// recorded source (a moved model file, say); the digest must still match.
pub fn policy_for_log(model: &ModelRef, override_spec: Option<&str>, data_dir: Option<&Path>) -> anyhow::Result<LoadedModel> {
    let spec = match override_spec {
        Some(s) => s.to_string(),
        None => model.source.strip_prefix("file:").unwrap_or(&model.source).to_string(),
    };
    let loaded = load_model(&spec, data_dir, "tiny")?;
    if loaded.model.digest != model.digest {
        bail!(
            "model `{spec}` has digest {}, the log was recorded with {}",
            loaded.model.digest,
            model.digest
        );
    }
    Ok(loaded)
}
