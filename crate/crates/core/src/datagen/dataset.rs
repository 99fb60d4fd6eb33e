use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::grid::{build_ybus, Grid, GridFile};
use crate::powerflow::{physics_loss, solve_ac, SolverOptions, VoltageSolution};

use super::{DataError, FamilySpec, Topology};

const MAX_ATTEMPTS: usize = 100;
const MANIFEST: &str = "manifest.json";

/// A solved grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: usize,
    pub family: String,
    pub grid: Grid<f64>,
    pub solution: VoltageSolution<f64>,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub specs: Vec<FamilySpec>,
    pub per_family: usize,
    pub seed: u64,
    pub samples: Vec<Sample>,
    /// Draws discarded because Newton did not converge.
    pub resampled: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecEntry {
    pub spec: FamilySpec,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestSample {
    pub id: usize,
    pub family: String,
    pub path: String,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub per_family: usize,
    pub resampled: usize,
    pub specs: Vec<SpecEntry>,
    pub samples: Vec<ManifestSample>,
}

fn spec_hash(spec: &FamilySpec) -> Result<String, DataError> {
    let digest = Sha256::digest(serde_json::to_vec(spec)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Independent stream per (family, sample); `u32::MAX` is the family's
/// base topology.
fn stream_rng(seed: u64, family: usize, sample: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((family as u64) << 32) | sample);
    rng
}

fn draw_sample(spec: &FamilySpec, base: &Topology, seed: u64, family: usize, index: usize) -> Result<(Grid<f64>, VoltageSolution<f64>, usize, usize), DataError> {
    let mut rng = stream_rng(seed, family, index as u64);
    let opts = SolverOptions::default();
    for attempt in 0..MAX_ATTEMPTS {
        let grid = base.vary(spec, &mut rng).realize(spec, &mut rng)?;
        let Ok(res) = solve_ac(&grid, &opts) else { continue };
        let y = build_ybus(&grid)?;
        if physics_loss(&grid, &y, &res.solution) < 1e-10 && res.solution.vm.iter().all(|&v| v > 0.5) {
            return Ok((grid, res.solution, res.iterations, attempt));
        }
    }
    Err(DataError::Resample { family: spec.name.clone(), attempts: MAX_ATTEMPTS })
}

/// `per_family` solved variations of one base topology per family.
/// Samples are generated in parallel from per-sample random streams, so the
/// result depends only on `(specs, per_family, seed)`.
pub fn generate_dataset(specs: &[FamilySpec], per_family: usize, seed: u64) -> Result<Dataset, DataError> {
    if per_family == 0 {
        return Err(DataError::Empty);
    }
    let mut samples = Vec::with_capacity(specs.len() * per_family);
    let mut resampled = 0;
    for (f, spec) in specs.iter().enumerate() {
        spec.validate()?;
        let base = Topology::random(spec, &mut stream_rng(seed, f, u32::MAX as u64));
        let drawn: Result<Vec<_>, DataError> = (0..per_family)
            .into_par_iter()
            .map(|i| draw_sample(spec, &base, seed, f, i))
            .collect();
        for (grid, solution, iterations, retries) in drawn? {
            resampled += retries;
            samples.push(Sample {
                id: samples.len(),
                family: spec.name.clone(),
                grid,
                solution,
                iterations,
            });
        }
    }
    if resampled > 0 {
        log::info!("resampled {resampled} non-convergent draws");
    }
    Ok(Dataset { specs: specs.to_vec(), per_family, seed, samples, resampled })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Family names in spec order.
    pub fn families(&self) -> Vec<String> {
        self.specs.iter().map(|s| s.name.clone()).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Vec<&Sample> {
        indices.iter().map(|&i| &self.samples[i]).collect()
    }

    pub fn manifest(&self) -> Result<Manifest, DataError> {
        Ok(Manifest {
            seed: self.seed,
            per_family: self.per_family,
            resampled: self.resampled,
            specs: self
                .specs
                .iter()
                .map(|s| Ok(SpecEntry { spec: s.clone(), sha256: spec_hash(s)? }))
                .collect::<Result<_, DataError>>()?,
            samples: self
                .samples
                .iter()
                .map(|s| ManifestSample {
                    id: s.id,
                    family: s.family.clone(),
                    path: sample_path(s.id),
                    iterations: s.iterations,
                })
                .collect(),
        })
    }

    /// Writes `manifest.json` and one grid-exchange file per sample, with
    /// the solution embedded.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), DataError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir.join("samples"))?;
        for s in &self.samples {
            let file = GridFile::from_grid(&s.grid).with_solution(&s.solution.vm, &s.solution.va);
            fs::write(dir.join(sample_path(s.id)), file.to_json())?;
        }
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&self.manifest()?)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, DataError> {
        let dir = dir.as_ref();
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
        for entry in &manifest.specs {
            if spec_hash(&entry.spec)? != entry.sha256 {
                return Err(DataError::Spec { name: entry.spec.name.clone(), detail: "hash mismatch".into() });
            }
        }
        let mut samples = Vec::with_capacity(manifest.samples.len());
        for m in &manifest.samples {
            let file = GridFile::from_json(&fs::read_to_string(dir.join(&m.path))?)?;
            let grid = file.to_grid::<f64>()?;
            let (vm, va) = file
                .solution_vectors()?
                .ok_or_else(|| DataError::Sample { id: m.id, detail: "missing solution".into() })?;
            samples.push(Sample {
                id: m.id,
                family: m.family.clone(),
                grid,
                solution: VoltageSolution::new(vm, va),
                iterations: m.iterations,
            });
        }
        Ok(Self {
            specs: manifest.specs.into_iter().map(|e| e.spec).collect(),
            per_family: manifest.per_family,
            seed: manifest.seed,
            samples,
            resampled: manifest.resampled,
        })
    }
}

fn sample_path(id: usize) -> String {
    format!("samples/sample_{id:05}.json")
}
