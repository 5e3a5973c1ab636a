use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use super::gradcam::seg_grad_cam;
use super::ig::integrated_gradients;
use super::pgm::Heatmap;
use super::shapley::{exact_shapley, Baseline, ShapleyResult, ValueFunction};
use crate::dataio::{crop_at, normalize, Container, CROP, FEATURE_NAMES};
use crate::error::{Error, Result};
use crate::fsio;
use crate::models::ModelGraph;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Methods {
    pub shap: bool,
    pub gradcam: bool,
    pub ig: bool,
}

impl Methods {
    pub const ALL: Methods = Methods { shap: true, gradcam: true, ig: true };
}

impl FromStr for Methods {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut m = Methods { shap: false, gradcam: false, ig: false };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "shap" => m.shap = true,
                "gradcam" => m.gradcam = true,
                "ig" => m.ig = true,
                _ => return Err(Error::invalid(format!("unknown method {part:?}; expected shap, gradcam or ig"))),
            }
        }
        if !(m.shap || m.gradcam || m.ig) {
            return Err(Error::invalid("no explanation method selected"));
        }
        Ok(m)
    }
}

pub struct ExplainModel<'a> {
    pub name: String,
    pub model: &'a ModelGraph,
    /// False for a freshly initialized model; flagged in the bundle.
    pub trained: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PcrRow {
    pub feature: String,
    pub gamma: f64,
    pub pcr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelPanel {
    pub name: String,
    pub untrained_warning: bool,
    pub gradcam_channels: Vec<Heatmap>,
    pub gradcam_combined: Option<Heatmap>,
    pub gradcam_weights: Vec<f64>,
    pub prediction: Heatmap,
    pub ig_pcr: Option<Vec<PcrRow>>,
    pub ig_pcr_degenerate: bool,
    pub ig_completeness_gap: Option<f64>,
    pub shapley: Option<ShapleyResult>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExplainBundle {
    pub sample_id: usize,
    pub crop: (usize, usize),
    pub methods: Methods,
    pub ig_steps: usize,
    pub panels: Vec<ModelPanel>,
}

fn heatmap(name: String, side: usize, values: Vec<f32>) -> Heatmap {
    Heatmap { name, width: side, height: side, values }
}

/// Centered `32×32` normalized crop of one container sample.
pub fn sample_input(data: &Container, sample_id: usize) -> Result<(Tensor, (usize, usize))> {
    if sample_id >= data.len() {
        return Err(Error::invalid(format!("sample id {sample_id} out of range 0..{}", data.len())));
    }
    let s = normalize(&data.samples[sample_id], &data.stats)?;
    let (dy, dx) = ((s.h.saturating_sub(CROP)) / 2, (s.w.saturating_sub(CROP)) / 2);
    let c = crop_at(&s, CROP, dy, dx)?;
    Ok((Tensor::new(&[crate::dataio::NUM_FEATURES, CROP, CROP], c.features)?, (dy, dx)))
}

/// Per-model panels for one sample: per-channel and combined Grad-CAM maps,
/// the predicted fire mask, the IG contribution table and exact Shapley
/// values, as selected by `methods`.
pub fn explain_sample(
    models: &[ExplainModel<'_>],
    data: &Container,
    sample_id: usize,
    methods: Methods,
    ig_steps: usize,
) -> Result<ExplainBundle> {
    let (x, crop) = sample_input(data, sample_id)?;
    let mut panels = Vec::with_capacity(models.len());
    for em in models {
        let logits = super::logits(em.model, x.clone().reshape(&[1, 12, CROP, CROP])?)?;
        let fire: Vec<usize> = (0..logits.len()).filter(|&i| logits[i] > 0.0).collect();
        let pixels: Vec<usize> = if fire.is_empty() { (0..logits.len()).collect() } else { fire };
        let prediction =
            heatmap(format!("{} prediction", em.name), CROP, logits.iter().map(|&z| if z > 0.0 { 1.0 } else { 0.0 }).collect());
        let mut panel = ModelPanel {
            name: em.name.clone(),
            untrained_warning: !em.trained,
            gradcam_channels: Vec::new(),
            gradcam_combined: None,
            gradcam_weights: Vec::new(),
            prediction,
            ig_pcr: None,
            ig_pcr_degenerate: false,
            ig_completeness_gap: None,
            shapley: None,
        };
        if methods.gradcam {
            let cam = seg_grad_cam(em.model, &x, Some(&pixels))?;
            panel.gradcam_channels = cam
                .channel_maps
                .iter()
                .enumerate()
                .map(|(k, m)| heatmap(format!("{} channel {}", em.name, k + 1), cam.side, m.clone()))
                .collect();
            panel.gradcam_combined = Some(heatmap(format!("{} combined", em.name), cam.side, cam.combined));
            panel.gradcam_weights = cam.weights;
        }
        if methods.ig {
            let ig = integrated_gradients(em.model, &x, ig_steps)?;
            panel.ig_pcr = Some(
                FEATURE_NAMES
                    .iter()
                    .zip(ig.totals.iter().zip(&ig.pcr.values))
                    .map(|(f, (&g, &p))| PcrRow { feature: f.to_string(), gamma: g, pcr: p })
                    .collect(),
            );
            panel.ig_pcr_degenerate = ig.pcr.degenerate;
            panel.ig_completeness_gap = Some(ig.completeness_gap);
        }
        if methods.shap {
            let mut vf = ValueFunction::new(em.model, &x, Baseline::Zeros, &pixels)?;
            panel.shapley = Some(exact_shapley(&mut vf)?);
        }
        panels.push(panel);
    }
    Ok(ExplainBundle { sample_id, crop, methods, ig_steps, panels })
}

#[derive(Serialize)]
struct PanelIndex<'a> {
    name: &'a str,
    untrained_warning: bool,
    per_channel: Vec<String>,
    combined: Option<String>,
    gradcam_weights: &'a [f64],
    prediction: Option<String>,
    ig_pcr: Option<String>,
    ig_pcr_degenerate: bool,
    ig_completeness_gap: Option<f64>,
    shapley: Option<&'a ShapleyResult>,
}

#[derive(Serialize)]
struct BundleIndex<'a> {
    title: String,
    sample_id: usize,
    crop: (usize, usize),
    methods: Methods,
    ig_steps: usize,
    models: Vec<PanelIndex<'a>>,
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect()
}

impl ExplainBundle {
    pub fn heatmap_count(&self, panel: usize) -> usize {
        let p = &self.panels[panel];
        p.gradcam_channels.len() + usize::from(p.gradcam_combined.is_some())
    }

    /// Writes `bundle.json` plus PGM maps, sidecars and CSV tables under
    /// `dir`; returns every written path.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let mut put = |rel: String, bytes: &[u8]| -> Result<String> {
            let p = dir.join(&rel);
            fsio::write_atomic(&p, bytes)?;
            written.push(p);
            Ok(rel)
        };
        let mut index = BundleIndex {
            title: format!("Analysis of sample {}", self.sample_id),
            sample_id: self.sample_id,
            crop: self.crop,
            methods: self.methods,
            ig_steps: self.ig_steps,
            models: Vec::new(),
        };
        for p in &self.panels {
            let base = slug(&p.name);
            let mut map = |file: String, h: &Heatmap| -> Result<String> {
                let rel = put(format!("{base}/{file}.pgm"), &h.to_pgm())?;
                put(format!("{base}/{file}.json"), h.sidecar_json().as_bytes())?;
                Ok(rel)
            };
            let per_channel = p
                .gradcam_channels
                .iter()
                .enumerate()
                .map(|(k, h)| map(format!("gradcam_channel_{:02}", k + 1), h))
                .collect::<Result<Vec<_>>>()?;
            let combined = p.gradcam_combined.as_ref().map(|h| map("gradcam_combined".into(), h)).transpose()?;
            let prediction = if self.methods.gradcam { Some(map("prediction".into(), &p.prediction)?) } else { None };
            let ig_pcr = match &p.ig_pcr {
                Some(rows) => {
                    let mut csv = String::from("feature,gamma,pcr\n");
                    for r in rows {
                        csv.push_str(&format!("{},{:e},{:.6}\n", r.feature, r.gamma, r.pcr));
                    }
                    Some(put(format!("{base}/ig_pcr.csv"), csv.as_bytes())?)
                }
                None => None,
            };
            index.models.push(PanelIndex {
                name: &p.name,
                untrained_warning: p.untrained_warning,
                per_channel,
                combined,
                gradcam_weights: &p.gradcam_weights,
                prediction,
                ig_pcr,
                ig_pcr_degenerate: p.ig_pcr_degenerate,
                ig_completeness_gap: p.ig_completeness_gap,
                shapley: p.shapley.as_ref(),
            });
        }
        let json = serde_json::to_string_pretty(&index).expect("index serializes");
        put("bundle.json".into(), json.as_bytes())?;
        Ok(written)
    }
}
