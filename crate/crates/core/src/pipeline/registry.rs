use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::psf::FWHM_PER_SIGMA;
use crate::rdn::{load_weights, RdnModel};

/// σ values (pixels) of the default model grid.
pub const DEFAULT_SIGMA_GRID: [f64; 10] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0];

/// Distances closer than this count as a tie.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct RegistryEntry {
    pub sigma: f64,
    pub weights: PathBuf,
}

/// Trained models keyed by the blur σ they were trained on.
///
/// On disk, one `sigma path` pair per line; `#` starts a comment and
/// relative paths resolve against the registry file's directory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelRegistry {
    entries: Vec<RegistryEntry>,
}

impl ModelRegistry {
    /// Sorts by σ and rejects duplicates or non-positive σ.
    pub fn new(mut entries: Vec<RegistryEntry>) -> Result<Self> {
        if let Some(e) = entries.iter().find(|e| !(e.sigma.is_finite() && e.sigma > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "registry sigma must be positive, got {}",
                e.sigma
            )));
        }
        entries.sort_by(|a, b| a.sigma.total_cmp(&b.sigma));
        if let Some(w) = entries.windows(2).find(|w| w[0].sigma == w[1].sigma) {
            return Err(Error::InvalidArgument(format!(
                "sigma {} registered twice",
                w[0].sigma
            )));
        }
        Ok(ModelRegistry { entries })
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, char::is_whitespace);
            let (sigma, path) = match (parts.next(), parts.next().map(str::trim)) {
                (Some(s), Some(p)) if !p.is_empty() => (s, p),
                _ => {
                    return Err(Error::Format(format!(
                        "registry line {}: expected `sigma path`, got {raw:?}",
                        n + 1
                    )))
                }
            };
            let sigma = sigma.parse::<f64>().map_err(|_| {
                Error::Format(format!("registry line {}: bad sigma {sigma:?}", n + 1))
            })?;
            let path = PathBuf::from(path);
            let weights = if path.is_absolute() {
                path
            } else {
                base_dir.join(path)
            };
            entries.push(RegistryEntry { sigma, weights });
        }
        ModelRegistry::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ModelRegistry::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# sigma_px weights\n");
        for e in &self.entries {
            out.push_str(&format!("{} {}\n", e.sigma, e.weights.display()));
        }
        out
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry whose σ is nearest to `sigma`; ties go to the smaller σ.
    pub fn select_sigma(&self, sigma: f64) -> Result<&RegistryEntry> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        let mut best: Option<&RegistryEntry> = None;
        for e in &self.entries {
            let d = (e.sigma - sigma).abs();
            // Entries are sorted, so keeping the earlier one on ties picks
            // the smaller σ.
            if best.is_none_or(|b| d < (b.sigma - sigma).abs() - TIE_TOLERANCE) {
                best = Some(e);
            }
        }
        best.ok_or_else(|| Error::InvalidArgument("model registry is empty".into()))
    }

    /// Model for a measured FWHM (pixels): σ* = FWHM / 2.3548, then
    /// [`select_sigma`](Self::select_sigma).
    pub fn select(&self, fwhm: f64) -> Result<&RegistryEntry> {
        if !(fwhm.is_finite() && fwhm > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "FWHM must be positive, got {fwhm}"
            )));
        }
        self.select_sigma(fwhm / FWHM_PER_SIGMA)
    }

    /// Loads an entry's weights and checks they were trained for its σ.
    pub fn load_model(&self, entry: &RegistryEntry) -> Result<RdnModel> {
        let model = load_weights(&entry.weights)?;
        if (model.meta.trained_sigma as f64 - entry.sigma).abs() > 1e-4 {
            return Err(Error::InvalidArgument(format!(
                "{} was trained at sigma {}, registered as {}",
                entry.weights.display(),
                model.meta.trained_sigma,
                entry.sigma
            )));
        }
        Ok(model)
    }

    /// Loads every model once.
    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            self.load_model(e)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdn::{init_model, save_weights};

    fn grid() -> ModelRegistry {
        ModelRegistry::new(
            DEFAULT_SIGMA_GRID
                .iter()
                .map(|&sigma| RegistryEntry {
                    sigma,
                    weights: PathBuf::from(format!("s{sigma}.rdnw")),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn selection_examples() {
        let r = grid();
        assert_eq!(r.select(2.355).unwrap().sigma, 1.0);
        // σ* = 2.2507: |2.0 − σ*| = 0.2507 > |2.5 − σ*| = 0.2493.
        assert_eq!(r.select(5.3).unwrap().sigma, 2.5);
        assert_eq!(r.select_sigma(1.25).unwrap().sigma, 1.0);
        assert_eq!(r.select_sigma(4.75).unwrap().sigma, 4.5);
        assert_eq!(r.select_sigma(100.0).unwrap().sigma, 5.0);
        assert_eq!(r.select_sigma(1e-3).unwrap().sigma, 0.5);
        assert!(r.select(0.0).is_err());
        assert!(ModelRegistry::default().select(2.0).is_err());
    }

    #[test]
    fn selection_is_idempotent() {
        let r = grid();
        for i in 1..200 {
            let fwhm = i as f64 * 0.07;
            let first = r.select(fwhm).unwrap().sigma;
            assert_eq!(r.select_sigma(first).unwrap().sigma, first);
        }
    }

    #[test]
    fn parse_and_validate() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = init_model(1, 1, 1, 2).unwrap();
        m.meta.trained_sigma = 1.5;
        save_weights(&m, dir.path().join("a.rdnw")).unwrap();
        let text = "# models\n1.5 a.rdnw  # trained\n\n";
        std::fs::write(dir.path().join("reg.txt"), text).unwrap();
        let r = ModelRegistry::load(dir.path().join("reg.txt")).unwrap();
        assert_eq!(r.entries().len(), 1);
        r.validate().unwrap();

        let wrong = ModelRegistry::parse("2.0 a.rdnw", dir.path()).unwrap();
        assert!(wrong.validate().is_err());
        assert!(ModelRegistry::parse("1.0 a\n1.0 b", dir.path()).is_err());
        assert!(ModelRegistry::parse("abc a", dir.path()).is_err());
        assert!(ModelRegistry::parse("1.0", dir.path()).is_err());
        assert!(ModelRegistry::parse("-1 a", dir.path()).is_err());
        let back = ModelRegistry::parse(&r.to_text(), dir.path()).unwrap();
        assert_eq!(back, r);
    }
}
