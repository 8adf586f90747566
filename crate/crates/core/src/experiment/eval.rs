use std::fmt;

use super::model::AsfModel;
use crate::error::{AsfError, Result};
use crate::fusion::{
    asf_forward, assemble_fused_fm, Availability, AvailabilityMask, Sensor, SensorAttentionMap, SensorBundle,
    SensorSet,
};
use crate::metrics::{
    ap_report, attention_ratio_report, export_object_features, ApRow, AttnRatioTable, FeatureTag, FrameResult,
    IouMode, ObjectFeature, SamRecord,
};
use crate::numerics::Graph;
use crate::scenes::{apply_failure, FailureSpec, Frame, Weather};

/// One evaluation condition: a sensor subset plus an injected failure.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSpec {
    pub name: String,
    pub combo: SensorSet,
    pub failure: FailureSpec,
}

impl EvalSpec {
    pub fn combo(combo: SensorSet) -> Self {
        Self {
            name: combo.code(),
            combo,
            failure: FailureSpec::none(),
        }
    }

    pub fn failure(name: impl Into<String>, failure: FailureSpec) -> Self {
        Self {
            name: name.into(),
            combo: SensorSet::FULL,
            failure,
        }
    }

    /// The seven sensor subsets plus damaged camera (`C*`) and damaged
    /// LiDAR (`L*`).
    pub fn standard() -> Vec<Self> {
        let mut v: Vec<Self> = SensorSet::COMBINATIONS.iter().map(|c| Self::combo(*c)).collect();
        v.push(Self::failure("C*", FailureSpec::camera_damaged()));
        v.push(Self::failure("L*", FailureSpec::lidar_damaged()));
        v
    }

    /// The bundle and mask a frame is fused with under this spec, or `None`
    /// when no sensor is left.
    pub fn prepare(&self, frame: &Frame) -> Option<(SensorBundle, AvailabilityMask)> {
        let mask = merge_masks(&frame.mask(), &self.failure.mask()).restrict(self.combo);
        if mask.present().is_empty() {
            return None;
        }
        let mut bundle = frame.bundle.clone();
        for s in Sensor::ALL {
            let f = self.failure.get(s);
            if let Some(fm) = bundle.get_mut(s) {
                apply_failure(fm, &f);
            }
        }
        Some((bundle, mask))
    }
}

impl fmt::Display for EvalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Absent wins; otherwise the worse degradation.
pub fn merge_masks(a: &AvailabilityMask, b: &AvailabilityMask) -> AvailabilityMask {
    let mut m = *a;
    for s in Sensor::ALL {
        let v = match (a.get(s), b.get(s)) {
            (Availability::Absent, _) | (_, Availability::Absent) => Availability::Absent,
            (Availability::Degraded(x), Availability::Degraded(y)) => Availability::Degraded(x.max(y)),
            (Availability::Degraded(x), _) | (_, Availability::Degraded(x)) => Availability::Degraded(x),
            _ => Availability::Available,
        };
        m.set(s, v);
    }
    m
}

/// Per-spec results over an evaluation set.
#[derive(Clone, Debug)]
pub struct SpecResult {
    pub spec: EvalSpec,
    /// Ids of evaluated frames; frames with no usable sensor are left out.
    pub frame_ids: Vec<usize>,
    pub results: Vec<FrameResult>,
    pub weathers: Vec<Weather>,
    pub sams: Vec<SensorAttentionMap>,
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub specs: Vec<SpecResult>,
    pub ap: Vec<ApRow>,
    /// Attention ratios of the all-sensor spec, by weather and distance.
    pub by_weather: AttnRatioTable,
    pub by_distance: AttnRatioTable,
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn spec(&self, name: &str) -> Option<&SpecResult> {
        self.specs.iter().find(|s| s.spec.name == name)
    }

    /// AP of one class (by name) at `condition`, e.g. `("sedan", "LR/all")`.
    pub fn ap(&self, class: &str, mode: IouMode, iou: f64, condition: &str) -> Option<f64> {
        self.ap
            .iter()
            .find(|r| r.class == class && r.mode == mode && r.iou == iou && r.condition == condition)
            .and_then(|r| r.value.map(|v| v.ap))
    }

    /// Class-averaged AP at `condition`, over classes with a defined value.
    pub fn mean_ap(&self, mode: IouMode, iou: f64, condition: &str) -> Option<f64> {
        let v: Vec<f64> = self
            .ap
            .iter()
            .filter(|r| r.mode == mode && r.iou == iou && r.condition == condition)
            .filter_map(|r| r.value.map(|v| v.ap))
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Runs every spec over `frames` with the same weights.
pub fn evaluate(model: &AsfModel, frames: &[Frame], specs: &[EvalSpec]) -> Result<EvalReport> {
    let class_names: Vec<String> = model.config.head.classes.iter().map(|c| c.name.clone()).collect();
    let mut out = Vec::with_capacity(specs.len());
    let mut ap = Vec::new();
    let mut notes = Vec::new();
    for spec in specs {
        let mut r = SpecResult {
            spec: spec.clone(),
            frame_ids: Vec::new(),
            results: Vec::new(),
            weathers: Vec::new(),
            sams: Vec::new(),
        };
        for f in frames {
            let Some((bundle, mask)) = spec.prepare(f) else {
                continue;
            };
            let inf = model.infer(&bundle, &mask)?;
            r.frame_ids.push(f.id);
            r.results.push(FrameResult {
                detections: inf.detections,
                gts: f.scene.objects.clone(),
            });
            r.weathers.push(f.weather());
            r.sams.push(inf.sam);
        }
        if r.frame_ids.len() < frames.len() {
            notes.push(format!(
                "{}: {} of {} frames had no usable sensor and were skipped",
                spec.name,
                frames.len() - r.frame_ids.len(),
                frames.len()
            ));
        }
        let conditions: Vec<String> = r.weathers.iter().map(|w| w.to_string()).collect();
        ap.extend(ap_report(&r.results, &conditions, &class_names, &spec.name));
        out.push(r);
    }
    let grid = model.config.scenes.grid;
    let records: Vec<SamRecord> = out
        .iter()
        .find(|s| s.spec.combo == SensorSet::FULL && s.spec.failure.is_none())
        .map(|s| {
            s.sams
                .iter()
                .zip(&s.weathers)
                .map(|(sam, w)| SamRecord {
                    sam,
                    weather: *w,
                    grid,
                })
                .collect()
        })
        .unwrap_or_default();
    if records.is_empty() {
        notes.push("no all-sensor spec evaluated; attention-ratio tables are empty".into());
    }
    let (by_weather, by_distance) = attention_ratio_report(&records, model.config.eval.distance_bin);
    Ok(EvalReport {
        specs: out,
        ap,
        by_weather,
        by_distance,
        notes,
    })
}

/// Per-object pooled features at the raw sensor maps, after canonical
/// projection and after cross-sensor attention, under `mask`.
pub fn export_features(
    model: &AsfModel,
    frame: &Frame,
    mask: &AvailabilityMask,
) -> Result<Vec<(FeatureTag, ObjectFeature)>> {
    let pool = model.config.eval.export_pool;
    let grid = model.config.scenes.grid;
    let objects = &frame.scene.objects;
    let tag = |stage: &str, sensor: &str| FeatureTag {
        frame: frame.id,
        stage: stage.into(),
        sensor: sensor.into(),
        weather: frame.weather().to_string(),
    };
    let mut out = Vec::new();
    for fm in frame.bundle.iter() {
        if mask.get(fm.sensor).is_present() {
            let (feats, _) = export_object_features(&fm.data, &grid, objects, pool)?;
            out.extend(feats.into_iter().map(|f| (tag("encoder", fm.sensor.name()), f)));
        }
    }
    let mut g = Graph::new();
    let fwd = asf_forward(&mut g, &model.store, &model.fusion, &frame.bundle, mask)?;
    for u in &fwd.unified {
        let grid_var = assemble_fused_fm(&mut g, u.features, &fwd.layout, 1)?;
        let (feats, _) = export_object_features(g.value(grid_var), &grid, objects, pool)?;
        out.extend(feats.into_iter().map(|f| (tag("post-UCP", u.sensor.name()), f)));
    }
    let casap = assemble_fused_fm(&mut g, fwd.casap, &fwd.layout, model.config.fusion.n_p)?;
    let (feats, _) = export_object_features(g.value(casap), &grid, objects, pool)?;
    out.extend(feats.into_iter().map(|f| (tag("post-CASAP", "fused"), f)));
    if out.is_empty() && !objects.is_empty() {
        return Err(AsfError::Contract("no features exported for a frame with objects".into()));
    }
    Ok(out)
}
