//! Capacitive proximity sensing through the cover. No field simulation:
//! the bench gave one normalized no-contact level and spread per layer
//! stack, so the module is a measured lookup plus a Gaussian noise
//! model, an affine recalibration that maps a contact-free window back
//! to 1, and a debounced contact detector. Cover temperature and water
//! circulation measurably do not influence the readings; the synthesis
//! entry point accepts both and ignores both.

use crate::error::{Error, Result};
use crate::timeseries::sig6;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::io::{BufRead, BufReader, Read, Write};

/// What sits between the electrode and the hand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerStack {
    /// Bare electrode against the arm; the normalization reference.
    Naked,
    Foam,
    FoamGel,
    FoamChannelsGel,
    /// The full cover with the channels filled, the operating state.
    FoamChannelsGelWater,
}

impl LayerStack {
    pub const ALL: [LayerStack; 5] = [
        LayerStack::Naked,
        LayerStack::Foam,
        LayerStack::FoamGel,
        LayerStack::FoamChannelsGel,
        LayerStack::FoamChannelsGelWater,
    ];

    pub fn label(self) -> &'static str {
        match self {
            LayerStack::Naked => "naked",
            LayerStack::Foam => "foam",
            LayerStack::FoamGel => "foam_gel",
            LayerStack::FoamChannelsGel => "foam_channels_gel",
            LayerStack::FoamChannelsGelWater => "foam_channels_gel_water",
        }
    }

    pub fn from_label(label: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.label() == label)
            .ok_or_else(|| Error::InvalidParameter {
                name: "layer stack",
                message: format!("unknown stack {label:?}"),
            })
    }
}

/// Normalized no-contact level and spread of one stack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapBaseline {
    /// Mean reading, 1 = bare electrode.
    pub mean: f64,
    /// Standard deviation of the reading.
    pub std: f64,
}

/// Measured no-contact baselines per stack. Each added layer screens the
/// hand further, so the means fall monotonically; the water column in
/// the channels costs by far the most signal.
pub fn baseline(stack: LayerStack) -> CapBaseline {
    let (mean, std) = match stack {
        LayerStack::Naked => (1.00, 4.49e-3),
        LayerStack::Foam => (0.946, 3.21e-3),
        LayerStack::FoamGel => (0.940, 4.88e-3),
        LayerStack::FoamChannelsGel => (0.833, 5.06e-3),
        LayerStack::FoamChannelsGelWater => (0.563, 1.67e-2),
    };
    CapBaseline { mean, std }
}

/// Affine map from raw to normalized readings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub gain: f64,
    pub offset: f64,
}

impl Calibration {
    pub fn identity() -> Self {
        Calibration {
            gain: 1.0,
            offset: 0.0,
        }
    }

    pub fn apply(&self, raw: f64) -> f64 {
        self.gain * raw + self.offset
    }
}

/// Shortest accepted contact-free window, s.
pub const MIN_WINDOW_S: f64 = 20.0;
/// Coefficient of variation above which the window is presumed touched.
/// The noisiest stack sits at 3 % relative spread; contact dips are far
/// larger.
pub const REJECT_COV: f64 = 0.05;
/// Normalized level below which a sample counts as a contact candidate.
pub const CONTACT_THRESHOLD: f64 = 0.8;
/// Consecutive candidates required before contact is declared.
pub const DEBOUNCE_SAMPLES: usize = 5;

/// Fits the gain that sends the mean of a contact-free window to 1.
/// The offset stays zero: an empty-handed sensor reads a scaled version
/// of the reference, not a shifted one.
pub fn recalibrate(t_s: &[f64], raw: &[f64]) -> Result<Calibration> {
    if t_s.len() != raw.len() || t_s.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "calibration window",
            message: format!("need aligned samples, got {} / {}", t_s.len(), raw.len()),
        });
    }
    let span = t_s.last().unwrap() - t_s.first().unwrap();
    if span + 1.0e-9 < MIN_WINDOW_S {
        return Err(Error::InvalidParameter {
            name: "calibration window",
            message: format!("window spans {span:.1} s, need {MIN_WINDOW_S} s"),
        });
    }
    let n = raw.len() as f64;
    let mean = raw.iter().sum::<f64>() / n;
    if !(mean > 0.0) {
        return Err(Error::CapsenseRejected(format!(
            "window mean {mean} is not a positive reading"
        )));
    }
    let var = raw.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let cov = var.sqrt() / mean;
    if cov > REJECT_COV {
        return Err(Error::CapsenseRejected(format!(
            "window varies {:.1} % of its mean, above {:.0} %: contact suspected",
            100.0 * cov,
            100.0 * REJECT_COV
        )));
    }
    Ok(Calibration {
        gain: 1.0 / mean,
        offset: 0.0,
    })
}

/// Debounced threshold detector. Contact is declared only after
/// [`DEBOUNCE_SAMPLES`] consecutive readings below the threshold, so a
/// single noise dip never fires.
#[derive(Debug, Clone)]
pub struct ContactDetector {
    threshold: f64,
    debounce: usize,
    below: usize,
}

impl Default for ContactDetector {
    fn default() -> Self {
        ContactDetector::new(CONTACT_THRESHOLD, DEBOUNCE_SAMPLES).unwrap()
    }
}

impl ContactDetector {
    pub fn new(threshold: f64, debounce: usize) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::InvalidParameter {
                name: "contact threshold",
                message: format!("{threshold} is outside (0, 1)"),
            });
        }
        if debounce == 0 {
            return Err(Error::InvalidParameter {
                name: "contact debounce",
                message: "need at least one sample".into(),
            });
        }
        Ok(ContactDetector {
            threshold,
            debounce,
            below: 0,
        })
    }

    pub fn reset(&mut self) {
        self.below = 0;
    }

    /// Feeds one normalized sample, returns the debounced contact state.
    pub fn update(&mut self, normalized: f64) -> bool {
        if normalized < self.threshold {
            self.below += 1;
        } else {
            self.below = 0;
        }
        self.below >= self.debounce
    }
}

/// Applies a calibration and a fresh default detector to a whole stream.
pub fn process_stream(raw: &[f64], calibration: &Calibration) -> (Vec<f64>, Vec<bool>) {
    let mut detector = ContactDetector::default();
    let normalized: Vec<f64> = raw.iter().map(|&r| calibration.apply(r)).collect();
    let contact = normalized.iter().map(|&v| detector.update(v)).collect();
    (normalized, contact)
}

/// Synthesizes a raw no-contact stream for one stack: Gaussian noise at
/// the measured level. `cover_temp_c` and `flow_rate` are accepted and
/// ignored; heating the cover or running the pump does not move the
/// readings, and keeping the arguments makes that claim checkable.
pub fn synthesize_stream(
    stack: LayerStack,
    samples: usize,
    dt_s: f64,
    seed: u64,
    _cover_temp_c: f64,
    _flow_rate: f64,
) -> (Vec<f64>, Vec<f64>) {
    let b = baseline(stack);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, b.std).unwrap();
    let t = (0..samples).map(|k| k as f64 * dt_s).collect();
    let raw = (0..samples).map(|_| b.mean + noise.sample(&mut rng)).collect();
    (t, raw)
}

/// Grasp intervals of the scripted session, s.
const GRASP_WINDOWS_S: [(f64, f64); 3] = [(35.0, 60.0), (80.0, 105.0), (125.0, 150.0)];
/// Raw level during a grasp, as a fraction of the no-contact mean.
const GRASP_DEPTH: f64 = 0.2;
const SCRIPT_DURATION_S: f64 = 180.0;
const SCRIPT_DT_S: f64 = 0.1;

/// Scripted three-minute grasp session on the operating stack: clean
/// 20 s head and tail, three grasp-and-release cycles in between.
pub fn grasp_script(seed: u64) -> (Vec<f64>, Vec<f64>) {
    let samples = (SCRIPT_DURATION_S / SCRIPT_DT_S).round() as usize + 1;
    let b = baseline(LayerStack::FoamChannelsGelWater);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, b.std).unwrap();
    let mut t = Vec::with_capacity(samples);
    let mut raw = Vec::with_capacity(samples);
    for k in 0..samples {
        let time = k as f64 * SCRIPT_DT_S;
        let grasped = GRASP_WINDOWS_S
            .iter()
            .any(|&(start, end)| time >= start && time < end);
        let level = if grasped { b.mean * GRASP_DEPTH } else { b.mean };
        t.push(time);
        raw.push(level + noise.sample(&mut rng));
    }
    (t, raw)
}

/// Reads a recorded stream, header `t_s,raw`.
pub fn read_stream_csv<R: Read>(reader: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| stream_error(1, e.to_string()))?
        .ok_or_else(|| stream_error(1, "empty stream".into()))?;
    if header.trim() != "t_s,raw" {
        return Err(stream_error(1, format!("expected header t_s,raw, got {header:?}")));
    }
    let mut t = Vec::new();
    let mut raw = Vec::new();
    for (index, line) in lines.enumerate() {
        let line = line.map_err(|e| stream_error(index + 2, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let mut field = |label: &str| -> Result<f64> {
            fields
                .next()
                .and_then(|f| f.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| stream_error(index + 2, format!("bad {label} field")))
        };
        t.push(field("t_s")?);
        raw.push(field("raw")?);
    }
    Ok((t, raw))
}

fn stream_error(line: usize, message: String) -> Error {
    Error::Config {
        line: Some(line),
        key: None,
        message,
    }
}

/// Writes a processed stream, header `t_s,normalized,contact`.
pub fn write_stream_csv<W: Write>(
    mut w: W,
    t_s: &[f64],
    normalized: &[f64],
    contact: &[bool],
) -> std::io::Result<()> {
    writeln!(w, "t_s,normalized,contact")?;
    for ((&t, &v), &flag) in t_s.iter().zip(normalized).zip(contact) {
        writeln!(w, "{},{},{}", sig6(t), sig6(v), u8::from(flag))?;
    }
    Ok(())
}
