//! Key=value text configs for scenes and training runs.
//!
//! Lines are `key=value`; blank lines and `#` comments are ignored. Unknown
//! and duplicate keys are rejected. Paths are resolved relative to the config
//! file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::camera::{CameraModel, Trajectory};
use crate::error::{Error, Result};
use crate::float::{fl, Real};
use crate::image::read_pgm;
use crate::simulator::SceneSpec;

/// Parsed `key=value` file with typed accessors that consume keys.
#[derive(Debug)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
    dir: PathBuf,
}

impl KeyValues {
    pub fn parse(text: &str, dir: impl Into<PathBuf>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("line {}: expected key=value, got {:?}", i + 1, raw))
            })?;
            let key = key.trim().to_string();
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::Format(format!("line {}: duplicate key \"{}\"", i + 1, key)));
            }
        }
        Ok(Self { entries, dir: dir.into() })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        Self::parse(&text, dir)
    }

    pub fn take(&mut self, key: &str) -> Result<String> {
        self.entries
            .remove(key)
            .ok_or_else(|| Error::Format(format!("missing key \"{}\"", key)))
    }

    pub fn take_opt(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn take_f64(&mut self, key: &str) -> Result<f64> {
        let raw = self.take(key)?;
        raw.parse::<f64>()
            .map_err(|_| Error::Format(format!("key \"{}\": bad number {:?}", key, raw)))
    }

    pub fn take_u64(&mut self, key: &str) -> Result<u64> {
        let raw = self.take(key)?;
        raw.parse::<u64>()
            .map_err(|_| Error::Format(format!("key \"{}\": bad integer {:?}", key, raw)))
    }

    pub fn take_opt_u64(&mut self, key: &str) -> Result<Option<u64>> {
        match self.take_opt(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<u64>()
                .map(Some)
                .map_err(|_| Error::Format(format!("key \"{}\": bad integer {:?}", key, raw))),
        }
    }

    pub fn take_opt_f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take_opt(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<f64>()
                .map(Some)
                .map_err(|_| Error::Format(format!("key \"{}\": bad number {:?}", key, raw))),
        }
    }

    /// Resolve a path value against the config directory.
    pub fn resolve(&self, value: &str) -> PathBuf {
        let p = Path::new(value);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }

    /// Error on any leftover (unknown) keys.
    pub fn finish(self) -> Result<()> {
        if self.entries.is_empty() {
            Ok(())
        } else {
            let keys: Vec<_> = self.entries.keys().cloned().collect();
            Err(Error::Format(format!("unknown keys: {}", keys.join(", "))))
        }
    }

    /// Echo of all raw entries, for run manifests.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.entries.clone()
    }
}

/// Everything a simulation or refocus run needs: scene, camera, trajectory,
/// and the event-sampling step.
#[derive(Debug, Clone)]
pub struct SceneConfig<F> {
    pub scene: SceneSpec<F>,
    pub cam: CameraModel<F>,
    pub traj: Trajectory<F>,
    pub dt_sample: u64,
}

/// Load a scene config file.
///
/// Keys: `target_image`, `occluder_mask`, `occluder_texture` (path or `none`),
/// `d`, `d_occ`, `pitch_target`, `pitch_occ`, `background`, `eta`,
/// `noise_rate`, `seed`, `velocity` (`vx,vy`), `t_start`, `t_end`, `ref_time`,
/// plus camera intrinsics `fx`, `fy`, `cx`, `cy`, `width`, `height` and the
/// simulator step `dt_sample`.
pub fn load_scene_config<F: Real>(path: impl AsRef<Path>) -> Result<SceneConfig<F>> {
    let mut kv = KeyValues::load(path)?;
    parse_scene_config(&mut kv).and_then(|cfg| {
        kv.finish()?;
        Ok(cfg)
    })
}

fn parse_scene_config<F: Real>(kv: &mut KeyValues) -> Result<SceneConfig<F>> {
    let target_path = kv.take("target_image")?;
    let target_image = read_pgm::<F>(kv.resolve(&target_path))?;
    let mask_path = kv.take("occluder_mask")?;
    let mask_img = read_pgm::<f64>(kv.resolve(&mask_path))?;
    let occluder_mask = mask_img.mapv(|v| v >= 0.5);
    let texture_path = kv.take("occluder_texture")?;
    let occluder_texture = match texture_path.as_str() {
        "none" => None,
        p => Some(read_pgm::<F>(kv.resolve(p))?),
    };

    let scene = SceneSpec {
        target_image,
        target_pitch: fl(kv.take_f64("pitch_target")?),
        depth_target: fl(kv.take_f64("d")?),
        occluder_mask,
        occluder_texture,
        occluder_pitch: fl(kv.take_f64("pitch_occ")?),
        depth_occluder: fl(kv.take_f64("d_occ")?),
        background: fl(kv.take_f64("background")?),
        eta: fl(kv.take_f64("eta")?),
        noise_rate: fl(kv.take_f64("noise_rate")?),
        seed: kv.take_u64("seed")?,
    };
    scene.validate()?;

    let width = u32::try_from(kv.take_u64("width")?)
        .map_err(|_| Error::Format("key \"width\": out of range".into()))?;
    let height = u32::try_from(kv.take_u64("height")?)
        .map_err(|_| Error::Format("key \"height\": out of range".into()))?;
    let cam = CameraModel::new(
        fl(kv.take_f64("fx")?),
        fl(kv.take_f64("fy")?),
        fl(kv.take_f64("cx")?),
        fl(kv.take_f64("cy")?),
        width,
        height,
    )?;

    let velocity_raw = kv.take("velocity")?;
    let mut it = velocity_raw.split(',');
    let (vx, vy) = match (it.next(), it.next(), it.next()) {
        (Some(a), Some(b), None) => {
            let vx = a.trim().parse::<f64>();
            let vy = b.trim().parse::<f64>();
            match (vx, vy) {
                (Ok(vx), Ok(vy)) => (vx, vy),
                _ => {
                    return Err(Error::Format(format!(
                        "key \"velocity\": bad pair {:?}",
                        velocity_raw
                    )))
                }
            }
        }
        _ => return Err(Error::Format(format!("key \"velocity\": expected vx,vy, got {:?}", velocity_raw))),
    };
    let traj = Trajectory::new(
        [fl(vx), fl(vy), F::zero()],
        kv.take_u64("t_start")?,
        kv.take_u64("t_end")?,
        kv.take_u64("ref_time")?,
    )?;

    let dt_sample = kv.take_u64("dt_sample")?;
    if dt_sample == 0 {
        return Err(Error::Format("key \"dt_sample\": must be > 0".into()));
    }

    Ok(SceneConfig { scene, cam, traj, dt_sample })
}

/// Training-run settings from a `key=value` file. Every key is optional;
/// architecture strings use the compact layer notation.
///
/// Keys: `encoder`, `decoder`, `skip_taps` (comma list), `n`, `alpha`,
/// `u_th`, `surrogate_width`, `lr`, `epochs`, `seed`, `halve_every`,
/// `beta_per`, `beta_pix`, `beta_tv`, `lambda` (comma list), `feature_seed`.
#[derive(Debug, Clone)]
pub struct TrainSettings {
    pub encoder: String,
    pub decoder: String,
    pub skip_taps: Vec<usize>,
    pub n: usize,
    pub lif: crate::network::spec::LifSpec,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub halve_every: Option<usize>,
    pub beta_per: f64,
    pub beta_pix: f64,
    pub beta_tv: f64,
    pub lambda: Option<Vec<f64>>,
    pub feature_seed: Option<u64>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            encoder: "sconv3p1-8,sconv1p0-8,sconv1p0-16".into(),
            decoder: "c3s1-16,r-16,r-16,c3s1-1".into(),
            skip_taps: vec![0, 1, 2],
            n: 30,
            lif: crate::network::spec::LifSpec::default(),
            lr: 5e-4,
            epochs: 100,
            seed: 0,
            halve_every: None,
            beta_per: 1.0,
            beta_pix: 32.0,
            beta_tv: 2e-4,
            lambda: None,
            feature_seed: None,
        }
    }
}

impl TrainSettings {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut kv = KeyValues::load(path)?;
        let settings = Self::from_key_values(&mut kv)?;
        kv.finish()?;
        Ok(settings)
    }

    pub fn from_key_values(kv: &mut KeyValues) -> Result<Self> {
        let mut s = Self::default();
        if let Some(v) = kv.take_opt("encoder") {
            s.encoder = v;
        }
        if let Some(v) = kv.take_opt("decoder") {
            s.decoder = v;
        }
        if let Some(v) = kv.take_opt("skip_taps") {
            s.skip_taps = v
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Format(format!("key \"skip_taps\": bad entry {:?}", t)))
                })
                .collect::<Result<_>>()?;
        }
        if let Some(v) = kv.take_opt_u64("n")? {
            s.n = v as usize;
        }
        if let Some(v) = kv.take_opt_f64("alpha")? {
            s.lif.alpha = v;
        }
        if let Some(v) = kv.take_opt_f64("u_th")? {
            s.lif.u_th = v;
        }
        if let Some(v) = kv.take_opt_f64("surrogate_width")? {
            s.lif.surrogate_width = v;
        }
        if let Some(v) = kv.take_opt_f64("lr")? {
            s.lr = v;
        }
        if let Some(v) = kv.take_opt_u64("epochs")? {
            s.epochs = v as usize;
        }
        if let Some(v) = kv.take_opt_u64("seed")? {
            s.seed = v;
        }
        if let Some(v) = kv.take_opt_u64("halve_every")? {
            s.halve_every = Some(v as usize);
        }
        if let Some(v) = kv.take_opt_f64("beta_per")? {
            s.beta_per = v;
        }
        if let Some(v) = kv.take_opt_f64("beta_pix")? {
            s.beta_pix = v;
        }
        if let Some(v) = kv.take_opt_f64("beta_tv")? {
            s.beta_tv = v;
        }
        if let Some(v) = kv.take_opt("lambda") {
            s.lambda = Some(
                v.split(',')
                    .map(|t| {
                        t.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Format(format!("key \"lambda\": bad entry {:?}", t)))
                    })
                    .collect::<Result<_>>()?,
            );
        }
        if let Some(v) = kv.take_opt_u64("feature_seed")? {
            s.feature_seed = Some(v);
        }
        Ok(s)
    }

    /// Architecture spec with this run's interval count and seed.
    pub fn network_spec(&self) -> Result<crate::network::spec::NetworkSpec> {
        let spec = crate::network::spec::NetworkSpec {
            input_channels: 2,
            n_steps: self.n,
            lif: self.lif,
            encoder: crate::network::spec::parse_encoder(&self.encoder)?,
            decoder: crate::network::spec::parse_decoder(&self.decoder)?,
            skip_taps: self.skip_taps.clone(),
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn loss_config<F: Real>(&self) -> Result<crate::network::loss::LossConfig<F>> {
        let mut loss = crate::network::loss::LossConfig::<F>::desk_default(
            self.feature_seed.unwrap_or_else(|| self.seed.wrapping_add(1)),
        )
        .with_betas(fl(self.beta_per), fl(self.beta_pix), fl(self.beta_tv));
        if let Some(lambda) = &self.lambda {
            loss.lambda = lambda.iter().map(|&v| fl(v)).collect();
        }
        loss.validate()?;
        Ok(loss)
    }

    pub fn train_config<F: Real>(&self) -> Result<crate::network::train::TrainConfig<F>> {
        let mut cfg =
            crate::network::train::TrainConfig::new(self.epochs, self.seed, self.loss_config()?);
        cfg.lr = fl(self.lr);
        cfg.halve_every = self.halve_every;
        Ok(cfg)
    }

    /// Raw key=value echo for run reports.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert("encoder".into(), self.encoder.clone());
        map.insert("decoder".into(), self.decoder.clone());
        map.insert(
            "skip_taps".into(),
            self.skip_taps.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(","),
        );
        map.insert("n".into(), self.n.to_string());
        map.insert("alpha".into(), self.lif.alpha.to_string());
        map.insert("u_th".into(), self.lif.u_th.to_string());
        map.insert("surrogate_width".into(), self.lif.surrogate_width.to_string());
        map.insert("lr".into(), self.lr.to_string());
        map.insert("epochs".into(), self.epochs.to_string());
        map.insert("seed".into(), self.seed.to_string());
        if let Some(h) = self.halve_every {
            map.insert("halve_every".into(), h.to_string());
        }
        map.insert("beta_per".into(), self.beta_per.to_string());
        map.insert("beta_pix".into(), self.beta_pix.to_string());
        map.insert("beta_tv".into(), self.beta_tv.to_string());
        if let Some(lambda) = &self.lambda {
            map.insert(
                "lambda".into(),
                lambda.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
            );
        }
        if let Some(fs) = self.feature_seed {
            map.insert("feature_seed".into(), fs.to_string());
        }
        map
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{format_pgm, Image};
    use ndarray::Array2;

    fn write_assets(dir: &Path) {
        let target: Image<f64> = Array2::from_shape_fn((16, 16), |(r, c)| ((r + c) % 5) as f64 / 8.0);
        std::fs::write(dir.join("target.pgm"), format_pgm(&target)).unwrap();
        let mask: Image<f64> = Array2::from_shape_fn((16, 16), |(_, c)| if c % 2 == 0 { 1.0 } else { 0.0 });
        std::fs::write(dir.join("mask.pgm"), format_pgm(&mask)).unwrap();
    }

    fn base_config() -> String {
        "\
target_image=target.pgm
occluder_mask=mask.pgm
occluder_texture=none
d=2.0
d_occ=1.0
pitch_target=0.02
pitch_occ=0.01
background=0.1
eta=0.2
noise_rate=0.0
seed=42
velocity=0.1,0.0
t_start=0
t_end=1000000
ref_time=500000
fx=100
fy=100
cx=7.5
cy=7.5
width=16
height=16
dt_sample=10000
"
        .to_string()
    }

    #[test]
    fn parses_complete_config() {
        let dir = tempfile::tempdir().unwrap();
        write_assets(dir.path());
        let path = dir.path().join("scene.cfg");
        std::fs::write(&path, base_config()).unwrap();
        let cfg = load_scene_config::<f64>(&path).unwrap();
        assert_eq!(cfg.cam.width, 16);
        assert_eq!(cfg.scene.seed, 42);
        assert_eq!(cfg.traj.ref_time(), 500_000);
        assert_eq!(cfg.dt_sample, 10_000);
        assert!(cfg.scene.occluder_texture.is_none());
    }

    #[test]
    fn missing_key_named() {
        let dir = tempfile::tempdir().unwrap();
        write_assets(dir.path());
        let text = base_config().lines().filter(|l| !l.starts_with("eta=")).collect::<Vec<_>>().join("\n");
        let path = dir.path().join("scene.cfg");
        std::fs::write(&path, text).unwrap();
        let err = load_scene_config::<f64>(&path).unwrap_err();
        assert!(err.to_string().contains("\"eta\""), "got {err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_assets(dir.path());
        let path = dir.path().join("scene.cfg");
        std::fs::write(&path, base_config() + "bogus=1\n").unwrap();
        let err = load_scene_config::<f64>(&path).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn duplicate_key_rejected() {
        let err = KeyValues::parse("a=1\na=2\n", ".").unwrap_err();
        assert!(err.to_string().contains('a'));
    }

    #[test]
    fn train_settings_defaults_and_overrides() {
        let mut kv = KeyValues::parse("n=10\nepochs=40\nlr=0.001\nu_th=0.4\n", ".").unwrap();
        let s = TrainSettings::from_key_values(&mut kv).unwrap();
        kv.finish().unwrap();
        assert_eq!(s.n, 10);
        assert_eq!(s.epochs, 40);
        assert_eq!(s.lr, 0.001);
        assert_eq!(s.lif.u_th, 0.4);
        assert_eq!(s.lif.alpha, 0.8);
        let spec = s.network_spec().unwrap();
        assert_eq!(spec.n_steps, 10);
        assert_eq!(spec.encoder.len(), 3);
        let cfg = s.train_config::<f32>().unwrap();
        assert_eq!(cfg.epochs, 40);
    }
}
