//! Strict JSON run configuration.
//!
//! Unknown keys anywhere in the document are errors, so a misspelled
//! sweep parameter can never silently fall back to a default.

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use serde_json::Value;

use rfla::analysis::{AspectMode, TrialConfig};
use rfla::baselines::{
    generate_anchors, AnchorSpec, CenterSamplingAssigner, GaussianAnchorAssigner, MaxIouAssigner,
    MaxIouConfig, ReceptiveAnchorAssigner, ScaleRanges,
};
use rfla::distances::MetricKind;
use rfla::hla::{HlaConfig, RflaAssigner};
use rfla::prelude::{build_grid, Assigner};
use rfla::receptive_field::{ConvLayerSpec, ErfSource, PyramidLevelSpec, PyramidSpec};

/// Fully parsed and validated run configuration.
#[derive(Debug)]
pub struct RunConfig {
    pub pyramid: PyramidSpec,
    pub assigner: AssignerConfig,
    pub analyze_assigners: Vec<AssignerConfig>,
    pub trial: Option<TrialConfig>,
    pub output_dir: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfigDto {
    pyramid: PyramidDto,
    assigner: Value,
    #[serde(default)]
    analyze_assigners: Option<Vec<Value>>,
    #[serde(default)]
    trial: Option<TrialDto>,
    #[serde(default)]
    output: Option<OutputDto>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputDto {
    dir: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PyramidDto {
    image_w: u64,
    image_h: u64,
    #[serde(default)]
    center_offset: Option<f64>,
    levels: Vec<LevelDto>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LevelDto {
    stride: u64,
    #[serde(default)]
    er: Option<f64>,
    #[serde(default)]
    conv_stack: Option<Vec<(u64, u64)>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrialDto {
    seed: u64,
    n_trials: usize,
    #[serde(default)]
    scale_lo: Option<f64>,
    #[serde(default)]
    scale_hi: Option<f64>,
    #[serde(default)]
    n_intervals: Option<usize>,
    #[serde(default)]
    aspect: Option<AspectDto>,
    #[serde(default)]
    gts_per_trial: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum AspectDto {
    Square,
    Jitter([f64; 2]),
}

/// One assigner entry, preserved in parsed form so sweeps can rebuild
/// variants of it.
#[derive(Debug, Clone)]
pub enum AssignerConfig {
    Rfla {
        name: String,
        cfg: HlaConfig,
    },
    MaxIou {
        name: String,
        anchors: AnchorSpec,
        cfg: MaxIouConfig,
    },
    Center {
        name: String,
        ranges: ScaleRanges,
    },
    GaussianAnchor {
        name: String,
        anchors: AnchorSpec,
        cfg: HlaConfig,
    },
    ReceptiveAnchor {
        name: String,
        cfg: MaxIouConfig,
    },
}

impl AssignerConfig {
    pub fn name(&self) -> &str {
        match self {
            AssignerConfig::Rfla { name, .. }
            | AssignerConfig::MaxIou { name, .. }
            | AssignerConfig::Center { name, .. }
            | AssignerConfig::GaussianAnchor { name, .. }
            | AssignerConfig::ReceptiveAnchor { name, .. } => name,
        }
    }

    /// Applies a metric override; only meaningful for the score-ranked
    /// assigners.
    pub fn with_metric(mut self, metric: MetricKind) -> Result<Self> {
        match &mut self {
            AssignerConfig::Rfla { cfg, .. } | AssignerConfig::GaussianAnchor { cfg, .. } => {
                cfg.metric = metric;
                Ok(self)
            }
            other => bail!(
                "--metric only applies to the rfla and gaussian_anchor assigners, \
                 config selects '{}'",
                other.name()
            ),
        }
    }
}

/// An assigner instantiated against a pyramid, together with the prior
/// rows its label table reports.
pub struct BuiltAssigner {
    pub name: String,
    pub assigner: Box<dyn Assigner>,
    pub priors: Vec<PriorRow>,
}

/// One row of the label table: the prior's identity and geometry.
pub struct PriorRow {
    pub flat_id: usize,
    pub level: usize,
    pub px: f64,
    pub py: f64,
    pub er: f64,
}

pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let dto: RunConfigDto = serde_json::from_str(text).context("invalid config")?;

    let levels = dto
        .pyramid
        .levels
        .iter()
        .map(|l| {
            let source = match (&l.er, &l.conv_stack) {
                (Some(er), None) => ErfSource::ExplicitRadius(*er),
                (None, Some(stack)) => ErfSource::ConvStack(
                    stack
                        .iter()
                        .map(|&(k, s)| ConvLayerSpec::new(k, s))
                        .collect::<rfla::Result<Vec<_>>>()?,
                ),
                _ => {
                    return Err(rfla::Error::InvalidPyramid(format!(
                        "level with stride {} must set exactly one of `er` or `conv_stack`",
                        l.stride
                    )))
                }
            };
            PyramidLevelSpec::new(l.stride, source)
        })
        .collect::<rfla::Result<Vec<_>>>()?;
    let pyramid = PyramidSpec::with_offset(
        dto.pyramid.image_w,
        dto.pyramid.image_h,
        levels,
        dto.pyramid.center_offset.unwrap_or(0.5),
    )?;

    let n_levels = pyramid.levels.len();
    let assigner = parse_assigner(&dto.assigner, n_levels)?;
    let analyze_assigners = match dto.analyze_assigners {
        Some(raw) => {
            let parsed = raw
                .iter()
                .map(|v| parse_assigner(v, n_levels))
                .collect::<Result<Vec<_>>>()?;
            for (i, a) in parsed.iter().enumerate() {
                if parsed[..i].iter().any(|b| b.name() == a.name()) {
                    bail!("duplicate assigner name '{}' in analyze_assigners", a.name());
                }
            }
            parsed
        }
        None => vec![assigner.clone()],
    };

    let trial = dto
        .trial
        .map(|t| -> Result<TrialConfig> {
            let aspect = match t.aspect {
                None | Some(AspectDto::Square) => AspectMode::Square,
                Some(AspectDto::Jitter([lo, hi])) => AspectMode::Jitter { lo, hi },
            };
            Ok(TrialConfig {
                seed: t.seed,
                n_trials: t.n_trials,
                scale_lo: t.scale_lo.unwrap_or(0.0),
                scale_hi: t.scale_hi.unwrap_or(64.0),
                n_intervals: t.n_intervals.unwrap_or(16),
                aspect,
                image_w: pyramid.image_w,
                image_h: pyramid.image_h,
                gts_per_trial: t.gts_per_trial.unwrap_or(1),
            })
        })
        .transpose()?;

    Ok(RunConfig {
        pyramid,
        assigner,
        analyze_assigners,
        trial,
        output_dir: dto.output.map(|o| o.dir),
    })
}

fn parse_assigner(value: &Value, n_levels: usize) -> Result<AssignerConfig> {
    let kind = value
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| anyhow!("assigner entry needs a string `kind` field"))?
        .to_string();

    match kind.as_str() {
        "rfla" => {
            #[derive(Deserialize)]
            #[serde(deny_unknown_fields)]
            struct Dto {
                #[allow(dead_code)]
                kind: String,
                #[serde(default)]
                k: Option<usize>,
                #[serde(default)]
                beta: Option<f64>,
                #[serde(default)]
                metric: Option<String>,
                #[serde(default)]
                name: Option<String>,
            }
            let dto: Dto = serde_json::from_value(value.clone()).context("rfla assigner")?;
            let cfg = HlaConfig::new(
                dto.k.unwrap_or(3),
                dto.beta.unwrap_or(0.9),
                parse_metric(dto.metric.as_deref().unwrap_or("kld"))?,
            )?;
            Ok(AssignerConfig::Rfla {
                name: dto.name.unwrap_or(kind),
                cfg,
            })
        }
        "maxiou" => {
            let (name, anchors, cfg) = parse_iou_family(value, &kind)?;
            Ok(AssignerConfig::MaxIou { name, anchors, cfg })
        }
        "center" => {
            #[derive(Deserialize)]
            #[serde(deny_unknown_fields)]
            struct Dto {
                #[allow(dead_code)]
                kind: String,
                #[serde(default)]
                ranges: Option<Vec<(f64, Option<f64>)>>,
                #[serde(default)]
                doubling_base: Option<f64>,
                #[serde(default)]
                name: Option<String>,
            }
            let dto: Dto = serde_json::from_value(value.clone()).context("center assigner")?;
            let ranges = match (dto.ranges, dto.doubling_base) {
                (Some(r), None) => ScaleRanges::new(
                    r.into_iter()
                        .map(|(lo, hi)| (lo, hi.unwrap_or(f64::INFINITY)))
                        .collect(),
                )?,
                (None, Some(base)) => ScaleRanges::doubling(n_levels, base)?,
                _ => bail!("center assigner needs exactly one of `ranges` or `doubling_base`"),
            };
            if ranges.n_levels() != n_levels {
                bail!(
                    "center assigner has {} scale ranges but the pyramid has {} levels",
                    ranges.n_levels(),
                    n_levels
                );
            }
            Ok(AssignerConfig::Center {
                name: dto.name.unwrap_or(kind),
                ranges,
            })
        }
        "gaussian_anchor" => {
            #[derive(Deserialize)]
            #[serde(deny_unknown_fields)]
            struct Dto {
                #[allow(dead_code)]
                kind: String,
                #[serde(default)]
                base_scale: Option<f64>,
                #[serde(default)]
                ratios: Option<Vec<f64>>,
                #[serde(default)]
                k: Option<usize>,
                #[serde(default)]
                beta: Option<f64>,
                #[serde(default)]
                metric: Option<String>,
                #[serde(default)]
                name: Option<String>,
            }
            let dto: Dto =
                serde_json::from_value(value.clone()).context("gaussian_anchor assigner")?;
            let anchors = AnchorSpec::new(
                dto.base_scale.unwrap_or(8.0),
                dto.ratios.unwrap_or_else(|| vec![0.5, 1.0, 2.0]),
            )?;
            let cfg = HlaConfig::new(
                dto.k.unwrap_or(3),
                dto.beta.unwrap_or(0.9),
                parse_metric(dto.metric.as_deref().unwrap_or("kld"))?,
            )?;
            Ok(AssignerConfig::GaussianAnchor {
                name: dto.name.unwrap_or(kind),
                anchors,
                cfg,
            })
        }
        "receptive_anchor" => {
            #[derive(Deserialize)]
            #[serde(deny_unknown_fields)]
            struct Dto {
                #[allow(dead_code)]
                kind: String,
                #[serde(default)]
                pos_thr: Option<f64>,
                #[serde(default)]
                neg_thr: Option<f64>,
                #[serde(default)]
                low_quality_match: Option<bool>,
                #[serde(default)]
                name: Option<String>,
            }
            let dto: Dto =
                serde_json::from_value(value.clone()).context("receptive_anchor assigner")?;
            let pos = dto.pos_thr.unwrap_or(0.5);
            let cfg = MaxIouConfig::new(
                pos,
                dto.neg_thr.unwrap_or(pos),
                dto.low_quality_match.unwrap_or(false),
            )?;
            Ok(AssignerConfig::ReceptiveAnchor {
                name: dto.name.unwrap_or(kind),
                cfg,
            })
        }
        other => bail!(
            "unknown assigner kind '{other}' \
             (expected rfla, maxiou, center, gaussian_anchor or receptive_anchor)"
        ),
    }
}

fn parse_iou_family(value: &Value, kind: &str) -> Result<(String, AnchorSpec, MaxIouConfig)> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Dto {
        #[allow(dead_code)]
        kind: String,
        #[serde(default)]
        base_scale: Option<f64>,
        #[serde(default)]
        ratios: Option<Vec<f64>>,
        #[serde(default)]
        pos_thr: Option<f64>,
        #[serde(default)]
        neg_thr: Option<f64>,
        #[serde(default)]
        low_quality_match: Option<bool>,
        #[serde(default)]
        name: Option<String>,
    }
    let dto: Dto = serde_json::from_value(value.clone()).context("maxiou assigner")?;
    let anchors = AnchorSpec::new(
        dto.base_scale.unwrap_or(8.0),
        dto.ratios.unwrap_or_else(|| vec![0.5, 1.0, 2.0]),
    )?;
    let pos = dto.pos_thr.unwrap_or(0.5);
    let cfg = MaxIouConfig::new(
        pos,
        dto.neg_thr.unwrap_or(pos),
        dto.low_quality_match.unwrap_or(false),
    )?;
    Ok((dto.name.unwrap_or_else(|| kind.to_string()), anchors, cfg))
}

pub fn parse_metric(token: &str) -> Result<MetricKind> {
    match token {
        "kld" => Ok(MetricKind::Kld),
        "wd" => Ok(MetricKind::Wasserstein),
        "giou" => Ok(MetricKind::Giou),
        other => bail!("unknown metric '{other}' (expected kld, wd or giou)"),
    }
}

/// Instantiates an assigner against the pyramid, producing both the
/// callable and the prior rows its label table reports. Anchor priors
/// report `er` as half the geometric-mean side, the radius of the
/// equivalent square.
pub fn build_assigner(cfg: &AssignerConfig, pyramid: &PyramidSpec) -> Result<BuiltAssigner> {
    let points = build_grid(pyramid)?;
    let point_rows = |pts: &[rfla::assignment::FeaturePoint]| -> Vec<PriorRow> {
        pts.iter()
            .map(|p| PriorRow {
                flat_id: p.flat_id,
                level: p.level,
                px: p.px,
                py: p.py,
                er: p.er,
            })
            .collect()
    };
    let anchor_rows = |anchors: &[rfla::baselines::Anchor]| -> Vec<PriorRow> {
        anchors
            .iter()
            .map(|a| PriorRow {
                flat_id: a.flat_id,
                level: a.level,
                px: a.bbox.cx(),
                py: a.bbox.cy(),
                er: (a.bbox.w() * a.bbox.h()).sqrt() / 2.0,
            })
            .collect()
    };

    Ok(match cfg {
        AssignerConfig::Rfla { name, cfg } => BuiltAssigner {
            name: name.clone(),
            priors: point_rows(&points),
            assigner: Box::new(RflaAssigner::new(points, *cfg)),
        },
        AssignerConfig::MaxIou { name, anchors, cfg } => {
            let tiled = generate_anchors(pyramid, anchors)?;
            BuiltAssigner {
                name: name.clone(),
                priors: anchor_rows(&tiled),
                assigner: Box::new(MaxIouAssigner::new(tiled, *cfg)),
            }
        }
        AssignerConfig::Center { name, ranges } => BuiltAssigner {
            name: name.clone(),
            priors: point_rows(&points),
            assigner: Box::new(CenterSamplingAssigner::new(points, ranges.clone())?),
        },
        AssignerConfig::GaussianAnchor { name, anchors, cfg } => {
            let tiled = generate_anchors(pyramid, anchors)?;
            BuiltAssigner {
                name: name.clone(),
                priors: anchor_rows(&tiled),
                assigner: Box::new(GaussianAnchorAssigner::new(tiled, *cfg)),
            }
        }
        AssignerConfig::ReceptiveAnchor { name, cfg } => BuiltAssigner {
            name: name.clone(),
            priors: point_rows(&points),
            assigner: Box::new(ReceptiveAnchorAssigner::new(points, *cfg)),
        },
    })
}
