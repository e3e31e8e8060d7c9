//! Samples, the line-oriented embedding file format, stratified splits and
//! the synthetic inconsistency generator.
//!
//! File layout: the first line is `{"header": {...}}` with the dims and a
//! provenance string; every following non-empty line is one JSON sample
//! record. Floats are written in shortest round-trip form, so a save/load
//! cycle reproduces every value bit for bit.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::disentangler::{AuxTargets, RawEmbeddings};
use crate::error::{Error, Result};
use crate::judgment::Label;
use crate::numcore::ops;
use crate::numcore::rng::{mix_seed, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub raw: RawEmbeddings,
    pub targets: AuxTargets,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub d_text: usize,
    pub d_image: usize,
    pub objects: usize,
    pub polarity: usize,
    #[serde(default)]
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<Sample>,
    /// Per-sample split assignment, parallel to `samples`, once assigned.
    pub splits: Option<Vec<Split>>,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: DatasetHeader,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleRecord {
    id: String,
    e_t: Vec<f64>,
    e_i: Vec<f64>,
    e_y: Vec<f64>,
    e_j: Vec<f64>,
    label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
}

impl Dataset {
    pub fn new(header: DatasetHeader, samples: Vec<Sample>) -> Result<Self> {
        let ds = Self { header, samples, splits: None };
        for (i, s) in ds.samples.iter().enumerate() {
            ds.check_sample(s).map_err(|e| relocate(e, i + 2))?;
        }
        ds.check_ids()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn check_sample(&self, s: &Sample) -> Result<()> {
        let h = &self.header;
        let dims = [
            ("e_t", s.raw.text.len(), h.d_text),
            ("e_i", s.raw.image.len(), h.d_image),
            ("e_y", s.targets.objects.len(), h.objects),
            ("e_j", s.targets.polarity.len(), h.polarity),
        ];
        for (name, got, want) in dims {
            if got != want {
                return Err(Error::data(format!("sample {}: {name} has dim {got}, header says {want}", s.id)));
            }
        }
        let finite =
            ops::all_finite(&s.raw.text) && ops::all_finite(&s.raw.image) && ops::all_finite(&s.targets.polarity);
        if !finite {
            return Err(Error::data(format!("sample {}: non-finite embedding value", s.id)));
        }
        s.targets.validate().map_err(|e| Error::data(format!("sample {}: {e}", s.id)))
    }

    fn check_ids(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, s) in self.samples.iter().enumerate() {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::data_at(i + 2, format!("duplicate sample id `{}`", s.id)));
            }
        }
        Ok(())
    }

    /// Indices of the samples assigned to `split`, in dataset order.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        match &self.splits {
            Some(s) => (0..self.len()).filter(|&i| s[i] == split).collect(),
            None => Vec::new(),
        }
    }

    pub fn find(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        let header = serde_json::to_string(&HeaderLine { header: self.header.clone() }).expect("header serializes");
        writeln!(w, "{header}")?;
        for (i, s) in self.samples.iter().enumerate() {
            let record = SampleRecord {
                id: s.id.clone(),
                e_t: s.raw.text.clone(),
                e_i: s.raw.image.clone(),
                e_y: s.targets.objects.clone(),
                e_j: s.targets.polarity.clone(),
                label: s.label.as_int(),
                split: self.splits.as_ref().map(|sp| sp[i]),
            };
            writeln!(w, "{}", serde_json::to_string(&record).expect("record serializes"))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(std::fs::File::create(path)?)
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let header = loop {
            match lines.next() {
                None => return Err(Error::data_at(1, "missing header line")),
                Some((i, line)) => {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let h: HeaderLine =
                        serde_json::from_str(&line).map_err(|e| Error::data_at(i + 1, format!("bad header: {e}")))?;
                    break h.header;
                }
            }
        };
        let mut ds = Dataset { header, samples: Vec::new(), splits: None };
        let mut splits = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i + 1;
            let rec: SampleRecord =
                serde_json::from_str(&line).map_err(|e| Error::data_at(lineno, format!("malformed record: {e}")))?;
            let label = Label::from_int(rec.label)
                .ok_or_else(|| Error::data_at(lineno, format!("label {} is not 0 or 1", rec.label)))?;
            let sample = Sample {
                id: rec.id,
                raw: RawEmbeddings { text: rec.e_t, image: rec.e_i },
                targets: AuxTargets { objects: rec.e_y, polarity: rec.e_j },
                label,
            };
            ds.check_sample(&sample).map_err(|e| relocate(e, lineno))?;
            if !seen.insert(sample.id.clone()) {
                return Err(Error::data_at(lineno, format!("duplicate sample id `{}`", sample.id)));
            }
            splits.push(rec.split);
            ds.samples.push(sample);
        }
        let assigned = splits.iter().filter(|s| s.is_some()).count();
        if assigned == splits.len() && assigned > 0 {
            ds.splits = Some(splits.into_iter().map(Option::unwrap).collect());
        } else if assigned != 0 {
            return Err(Error::data("split must be given for every record or for none"));
        }
        Ok(ds)
    }
}

fn relocate(e: Error, line: usize) -> Error {
    match e {
        Error::Data { message, .. } => Error::data_at(line, message),
        other => other,
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::data(format!("cannot open dataset {}: {e}", path.display())))?;
    Dataset::read_from(BufReader::new(file))
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    ds.save(path)
}

pub(crate) fn validate_fractions(f: [f64; 3]) -> Result<()> {
    if f.iter().any(|v| !(0.0..=1.0).contains(v)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("split fractions {f:?} must be in [0, 1] and sum to 1")));
    }
    Ok(())
}

/// Seeded split, stratified by label: each label group is shuffled and cut at
/// the rounded cumulative fractions.
pub fn split(dataset: &Dataset, fractions: [f64; 3], seed: u64) -> Result<Dataset> {
    validate_fractions(fractions)?;
    let mut assignment = vec![Split::Train; dataset.len()];
    for label in [Label::Real, Label::Fake] {
        let mut group: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.samples[i].label == label).collect();
        Rng::derive(seed, &[0x5B11, label.as_int() as u64]).shuffle(&mut group);
        let n = group.len() as f64;
        let train_end = (fractions[0] * n).round() as usize;
        let val_end = (((fractions[0] + fractions[1]) * n).round() as usize).max(train_end);
        for (pos, &idx) in group.iter().enumerate() {
            assignment[idx] = if pos < train_end {
                Split::Train
            } else if pos < val_end {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    let mut out = dataset.clone();
    out.splits = Some(assignment);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FakeType {
    /// Image facts disagree with the text.
    FactMismatch,
    /// Text tone disagrees with the image.
    SentimentMismatch,
    Both,
}

/// Synthetic generator settings. Also readable as a flat TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_samples: usize,
    pub d_text: usize,
    pub d_image: usize,
    pub objects: usize,
    pub polarity: usize,
    pub seed: u64,
    pub fake_fraction: f64,
    /// Size of the cross-modal latent perturbation applied to fakes.
    pub conflict_strength: f64,
    /// Relative weights of fact mismatch, sentiment mismatch and both.
    pub fake_type_mix: [f64; 3],
    /// Dimension of the shared factual latent.
    pub fact_latent: usize,
    /// Std of the per-modality observation noise.
    pub noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            d_text: 32,
            d_image: 32,
            objects: 80,
            polarity: 4,
            seed: 0,
            fake_fraction: 0.5,
            conflict_strength: 2.0,
            fake_type_mix: [1.0, 1.0, 1.0],
            fact_latent: 8,
            noise: 0.1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if [self.d_text, self.d_image, self.objects, self.polarity, self.fact_latent].contains(&0) {
            return Err(Error::config("synthetic dims must be positive"));
        }
        if !(self.fake_fraction > 0.0 && self.fake_fraction < 1.0) {
            return Err(Error::config("fake_fraction must lie in (0, 1)"));
        }
        if !(self.conflict_strength >= 0.0 && self.conflict_strength.is_finite()) {
            return Err(Error::config("conflict_strength must be non-negative"));
        }
        if self.fake_type_mix.iter().any(|w| *w < 0.0 || !w.is_finite())
            || self.fake_type_mix.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::config("fake_type_mix weights must be non-negative with a positive sum"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::config("noise must be non-negative"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::config(format!("synth spec: {e}")))?;
        crate::config::reject_unknown_keys(&table, &SynthSpec::default())?;
        table.try_into().map_err(|e: toml::de::Error| Error::config(format!("synth spec: {e}")))
    }
}

/// Fixed linear maps shared by every sample of one synthetic dataset.
struct World {
    text_mix: Vec<Vec<f64>>,
    image_mix: Vec<Vec<f64>>,
    object_map: Vec<Vec<f64>>,
    fact_direction: Vec<f64>,
    tone_direction: Vec<f64>,
}

impl World {
    fn new(spec: &SynthSpec) -> Self {
        let mut rng = Rng::derive(spec.seed, &[0xB0B0]);
        let k = spec.fact_latent + spec.polarity;
        let scale = 1.0 / (k as f64).sqrt();
        let matrix = |rows: usize, cols: usize, s: f64, rng: &mut Rng| -> Vec<Vec<f64>> {
            (0..rows).map(|_| rng.normal_vec(cols, s)).collect()
        };
        let text_mix = matrix(spec.d_text, k, scale, &mut rng);
        let image_mix = matrix(spec.d_image, k, scale, &mut rng);
        let object_map = matrix(spec.objects, spec.fact_latent, 1.0, &mut rng);
        let unit = |v: Vec<f64>| {
            let n = ops::norm(&v);
            v.into_iter().map(|x| x / n).collect::<Vec<_>>()
        };
        let fact_direction = unit(rng.normal_vec(spec.fact_latent, 1.0));
        let tone_direction = unit(rng.normal_vec(spec.polarity, 1.0));
        Self { text_mix, image_mix, object_map, fact_direction, tone_direction }
    }
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| ops::dot(row, v)).collect()
}

/// Perturbation `strength * (direction + xi)`, `xi ~ N(0, I / k)`.
fn perturb(latent: &mut [f64], direction: &[f64], strength: f64, rng: &mut Rng) {
    let jitter = 1.0 / (latent.len() as f64).sqrt();
    for (z, u) in latent.iter_mut().zip(direction) {
        *z += strength * (u + jitter * rng.normal());
    }
}

/// Generated dataset plus the fake type of each sample (`None` for real ones).
pub struct SyntheticData {
    pub dataset: Dataset,
    pub fake_types: Vec<Option<FakeType>>,
}

/// Real samples share one latent across modalities; fakes perturb the image's
/// factual latent and/or the text's tone latent. Sample `i` depends only on
/// `(seed, i)`, never on how many samples are generated.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    Ok(generate_synthetic_detailed(spec)?.dataset)
}

pub fn generate_synthetic_detailed(spec: &SynthSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let world = World::new(spec);
    let kf = spec.fact_latent;
    let mix_total: f64 = spec.fake_type_mix.iter().sum();
    let mut samples = Vec::with_capacity(spec.n_samples);
    let mut fake_types = Vec::with_capacity(spec.n_samples);
    for i in 0..spec.n_samples {
        let mut rng = Rng::new(mix_seed(spec.seed, &[0x5A3B, i as u64]));
        let fake = rng.bernoulli(spec.fake_fraction);
        let latent = rng.normal_vec(kf + spec.polarity, 1.0);
        let mut text_latent = latent.clone();
        let mut image_latent = latent;
        let fake_type = if fake {
            let pick = rng.uniform(0.0, mix_total);
            let t = if pick < spec.fake_type_mix[0] {
                FakeType::FactMismatch
            } else if pick < spec.fake_type_mix[0] + spec.fake_type_mix[1] {
                FakeType::SentimentMismatch
            } else {
                FakeType::Both
            };
            if matches!(t, FakeType::FactMismatch | FakeType::Both) {
                perturb(&mut image_latent[..kf], &world.fact_direction, spec.conflict_strength, &mut rng);
            }
            if matches!(t, FakeType::SentimentMismatch | FakeType::Both) {
                perturb(&mut text_latent[kf..], &world.tone_direction, spec.conflict_strength, &mut rng);
            }
            Some(t)
        } else {
            None
        };
        let mut observe = |mix: &[Vec<f64>], z: &[f64]| -> Vec<f64> {
            mat_vec(mix, z).into_iter().map(|v| v + spec.noise * rng.normal()).collect()
        };
        let text = observe(&world.text_mix, &text_latent);
        let image = observe(&world.image_mix, &image_latent);
        let objects = mat_vec(&world.object_map, &image_latent[..kf])
            .into_iter()
            .map(|a| if a > 0.0 { 1.0 } else { 0.0 })
            .collect();
        let polarity = text_latent[kf..].iter().map(|t| (0.5 * t).clamp(-1.0, 1.0)).collect();
        samples.push(Sample {
            id: format!("syn-{i:06}"),
            raw: RawEmbeddings { text, image },
            targets: AuxTargets { objects, polarity },
            label: if fake { Label::Fake } else { Label::Real },
        });
        fake_types.push(fake_type);
    }
    let header = DatasetHeader {
        d_text: spec.d_text,
        d_image: spec.d_image,
        objects: spec.objects,
        polarity: spec.polarity,
        provenance: format!(
            "synthetic seed={} conflict_strength={} fake_fraction={} mix={:?}",
            spec.seed, spec.conflict_strength, spec.fake_fraction, spec.fake_type_mix
        ),
    };
    Ok(SyntheticData { dataset: Dataset::new(header, samples)?, fake_types })
}
