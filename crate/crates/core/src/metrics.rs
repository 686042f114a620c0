//! Objective metrics: pitch class entropy, scale consistency, groove
//! consistency, and mean ± 95% confidence interval aggregation.

use crate::score::Song;

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("empty pitch histogram")]
    EmptyPitchHistogram,
    #[error("too short for groove: {measures} measure(s)")]
    TooShortForGroove { measures: usize },
    #[error("invalid measure length {0}")]
    BadMeasureLength(u32),
    #[error("need at least 2 values for a confidence interval, got {0}")]
    TooFewValues(usize),
}

const MAJOR: [usize; 7] = [0, 2, 4, 5, 7, 9, 11];
const NATURAL_MINOR: [usize; 7] = [0, 2, 3, 5, 7, 8, 10];

/// Note counts per pitch class over non-drum tracks.
pub fn pitch_class_histogram(song: &Song) -> [u64; 12] {
    let mut h = [0u64; 12];
    for t in song.tracks.iter().filter(|t| !t.is_drum) {
        for n in &t.notes {
            h[n.pitch_class()] += 1;
        }
    }
    h
}

/// Shannon entropy in bits of the normalized pitch-class histogram.
/// Drum tracks are excluded; each note counts once regardless of length.
pub fn pitch_class_entropy(song: &Song) -> Result<f64, MetricError> {
    let h = pitch_class_histogram(song);
    let total: u64 = h.iter().sum();
    if total == 0 {
        return Err(MetricError::EmptyPitchHistogram);
    }
    let total = total as f64;
    Ok(h.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum())
}

/// Highest fraction of non-drum notes inside one major or natural-minor scale,
/// over all 12 roots.
pub fn scale_consistency(song: &Song) -> Result<f64, MetricError> {
    let h = pitch_class_histogram(song);
    let total: u64 = h.iter().sum();
    if total == 0 {
        return Err(MetricError::EmptyPitchHistogram);
    }
    let best = (0..12)
        .flat_map(|root| [MAJOR, NATURAL_MINOR].map(|scale| scale.iter().map(|d| h[(root + d) % 12]).sum::<u64>()))
        .max()
        .unwrap_or(0);
    Ok(best as f64 / total as f64)
}

/// Per-measure onset patterns: `patterns[m][s]` is true when some note
/// (drums included) starts at step `s` of measure `m`.
pub fn groove_patterns(song: &Song) -> Result<Vec<Vec<bool>>, MetricError> {
    let r = song.steps_per_measure;
    if r == 0 {
        return Err(MetricError::BadMeasureLength(r));
    }
    let Some(last) = song.tracks.iter().flat_map(|t| t.notes.iter().map(|n| n.onset)).max() else {
        return Ok(Vec::new());
    };
    let measures = (last / r) as usize + 1;
    let mut patterns = vec![vec![false; r as usize]; measures];
    for t in &song.tracks {
        for n in &t.notes {
            patterns[(n.onset / r) as usize][(n.onset % r) as usize] = true;
        }
    }
    Ok(patterns)
}

/// One minus the mean normalized Hamming distance between the onset
/// patterns of neighbouring measures.
pub fn groove_consistency(song: &Song) -> Result<f64, MetricError> {
    let patterns = groove_patterns(song)?;
    if patterns.len() < 2 {
        return Err(MetricError::TooShortForGroove { measures: patterns.len() });
    }
    let r = song.steps_per_measure as f64;
    let total: usize = patterns
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).filter(|(a, b)| a != b).count())
        .sum();
    Ok(1.0 - total as f64 / (r * (patterns.len() - 1) as f64))
}

/// Mean and Gaussian 95% half-width over per-song values.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub values: Vec<f64>,
    pub mean: f64,
    /// `1.96 * s / sqrt(n)` with the n-1 sample standard deviation.
    pub ci95: f64,
}

impl MetricReport {
    pub fn n(&self) -> usize {
        self.values.len()
    }
}

pub fn aggregate(values: &[f64]) -> Result<MetricReport, MetricError> {
    let n = values.len();
    if n < 2 {
        return Err(MetricError::TooFewValues(n));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let ci95 = 1.96 * var.sqrt() / (n as f64).sqrt();
    Ok(MetricReport { values: values.to_vec(), mean, ci95 })
}

/// The three metrics over a set of songs. Songs a metric cannot be
/// computed on (no pitched notes, fewer than two measures) are left out
/// of that metric's report.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusMetrics {
    pub pitch_class_entropy: Result<MetricReport, MetricError>,
    pub scale_consistency: Result<MetricReport, MetricError>,
    pub groove_consistency: Result<MetricReport, MetricError>,
}

impl CorpusMetrics {
    pub fn rows(&self) -> [(&'static str, &Result<MetricReport, MetricError>); 3] {
        [
            ("pitch_class_entropy", &self.pitch_class_entropy),
            ("scale_consistency", &self.scale_consistency),
            ("groove_consistency", &self.groove_consistency),
        ]
    }
}

pub fn evaluate_songs(songs: &[Song]) -> CorpusMetrics {
    let collect = |f: fn(&Song) -> Result<f64, MetricError>| -> Vec<f64> { songs.iter().filter_map(|s| f(s).ok()).collect() };
    CorpusMetrics {
        pitch_class_entropy: aggregate(&collect(pitch_class_entropy)),
        scale_consistency: aggregate(&collect(scale_consistency)),
        groove_consistency: aggregate(&collect(groove_consistency)),
    }
}
