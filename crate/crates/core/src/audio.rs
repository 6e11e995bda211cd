//! MFCC features over one-second audio buffers, clip slicing and a pluggable
//! three-class audio classifier with a nearest-centroid baseline.

use std::io::{Read, Seek, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftNum, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::scalar::Scalar;
use crate::types::{SensorId, TargetClass};

pub const SAMPLE_RATE: usize = 44_100;

/// Exactly one second of mono samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: usize,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: usize) -> Result<Self> {
        if samples.len() != sample_rate {
            return param(format!(
                "buffer must hold one second ({sample_rate} samples), got {}",
                samples.len()
            ));
        }
        if samples.iter().any(|s| !s.is_finite() || s.abs() > 1.0) {
            return param("samples must be finite and within [-1, 1]");
        }
        Ok(AudioBuffer {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> usize {
        self.sample_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    pub sample_rate: usize,
    /// Hamming window length in samples (30 ms).
    pub window_length: usize,
    /// Overlap between consecutive windows in samples (20 ms).
    pub overlap: usize,
    pub num_coeffs: usize,
    pub num_mel_filters: usize,
    /// Zero-padded FFT length; `None` picks the next power of two.
    pub fft_length: Option<usize>,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        let fs = SAMPLE_RATE as f64;
        MfccConfig {
            sample_rate: SAMPLE_RATE,
            window_length: (0.03 * fs).round() as usize,
            overlap: (0.02 * fs).round() as usize,
            num_coeffs: 13,
            num_mel_filters: 32,
            fft_length: None,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn hop(&self) -> usize {
        self.window_length - self.overlap
    }

    pub fn fft_len(&self) -> usize {
        self.fft_length
            .unwrap_or_else(|| self.window_length.next_power_of_two())
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_length == 0 || self.overlap >= self.window_length {
            return param("overlap must be shorter than the window");
        }
        if self.num_coeffs == 0 || self.num_coeffs >= self.num_mel_filters {
            // c0 is dropped, so c1..cN needs N+1 cepstral terms.
            return param("num_coeffs must be below num_mel_filters");
        }
        if self.fft_len() < self.window_length || self.sample_rate == 0 {
            return param("FFT length must cover the window");
        }
        if !(self.log_floor > 0.0) {
            return param("log floor must be positive");
        }
        Ok(())
    }

    /// Number of complete windows in `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.window_length {
            0
        } else {
            (len - self.window_length) / self.hop() + 1
        }
    }
}

/// `n_frames x num_coeffs` matrix of cepstral coefficients c1..cN.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccFrames<T = f64> {
    pub n_frames: usize,
    pub num_coeffs: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> MfccFrames<T> {
    pub fn frame(&self, i: usize) -> &[T] {
        &self.data[i * self.num_coeffs..(i + 1) * self.num_coeffs]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.num_coeffs)
    }

    /// Per-coefficient mean over time.
    pub fn time_average(&self) -> Vec<T> {
        let mut avg = vec![T::zero(); self.num_coeffs];
        for f in self.frames() {
            for (a, v) in avg.iter_mut().zip(f) {
                *a = *a + *v;
            }
        }
        let n = T::from_usize_lossy(self.n_frames.max(1));
        avg.into_iter().map(|a| a / n).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (1..=self.num_coeffs).map(|i| format!("c{i}")).collect();
        writeln!(out, "frame,{}", header.join(","))?;
        for (i, f) in self.frames().enumerate() {
            let row: Vec<String> = f.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{i},{}", row.join(","))?;
        }
        Ok(())
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Symmetric Hamming window.
pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Triangular HTK-mel filters over FFT bins `0..=fft_len/2`, spanning `[0, fs/2]`.
pub fn mel_filterbank(num_filters: usize, fft_len: usize, sample_rate: usize) -> Vec<Vec<f64>> {
    let nyquist = sample_rate as f64 / 2.0;
    let (m_lo, m_hi) = (hz_to_mel(0.0), hz_to_mel(nyquist));
    let edges: Vec<f64> = (0..num_filters + 2)
        .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (num_filters + 1) as f64))
        .collect();
    let bins = fft_len / 2 + 1;
    (0..num_filters)
        .map(|m| {
            let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * sample_rate as f64 / fft_len as f64;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= c {
                        (f - lo) / (c - lo)
                    } else {
                        (hi - f) / (hi - c)
                    }
                })
                .collect()
        })
        .collect()
}

/// Reusable MFCC extractor: window, filterbank, DCT basis and FFT plan.
pub struct Mfcc<T: Scalar + FftNum = f64> {
    cfg: MfccConfig,
    window: Vec<T>,
    filters: Vec<Vec<T>>,
    /// Orthonormal DCT-II rows for c1..cN.
    dct: Vec<Vec<T>>,
    fft: Arc<dyn Fft<T>>,
}

impl<T: Scalar + FftNum> Mfcc<T> {
    pub fn new(cfg: MfccConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.fft_len();
        let m = cfg.num_mel_filters;
        let dct = (1..=cfg.num_coeffs)
            .map(|k| {
                let s = (2.0 / m as f64).sqrt();
                (0..m)
                    .map(|j| {
                        T::lit(s * (std::f64::consts::PI * k as f64 * (2 * j + 1) as f64 / (2 * m) as f64).cos())
                    })
                    .collect()
            })
            .collect();
        Ok(Mfcc {
            cfg,
            window: hamming(cfg.window_length).into_iter().map(T::lit).collect(),
            filters: mel_filterbank(m, n, cfg.sample_rate)
                .into_iter()
                .map(|f| f.into_iter().map(T::lit).collect())
                .collect(),
            dct,
            fft: FftPlanner::new().plan_fft_forward(n),
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.cfg
    }

    pub fn extract(&self, samples: &[T]) -> Result<MfccFrames<T>> {
        let cfg = &self.cfg;
        if samples.len() < cfg.window_length {
            return param(format!(
                "need at least {} samples, got {}",
                cfg.window_length,
                samples.len()
            ));
        }
        let n_frames = cfg.frame_count(samples.len());
        let n = cfg.fft_len();
        let floor = T::lit(cfg.log_floor);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); self.fft.get_inplace_scratch_len()];
        let mut log_mel = vec![T::zero(); cfg.num_mel_filters];
        let mut data = Vec::with_capacity(n_frames * cfg.num_coeffs);
        for f in 0..n_frames {
            let start = f * cfg.hop();
            for (i, c) in buf.iter_mut().enumerate() {
                *c = if i < cfg.window_length {
                    Complex::new(samples[start + i] * self.window[i], T::zero())
                } else {
                    Complex::new(T::zero(), T::zero())
                };
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (lm, filt) in log_mel.iter_mut().zip(&self.filters) {
                let e: T = filt
                    .iter()
                    .zip(&buf)
                    .map(|(w, c)| *w * c.norm())
                    .sum();
                *lm = e.max(floor).ln();
            }
            for row in &self.dct {
                data.push(row.iter().zip(&log_mel).map(|(a, b)| *a * *b).sum());
            }
        }
        Ok(MfccFrames {
            n_frames,
            num_coeffs: cfg.num_coeffs,
            data,
        })
    }
}

/// MFCCs of a one-second buffer with a fresh extractor.
pub fn mfcc(buffer: &AudioBuffer, cfg: &MfccConfig) -> Result<MfccFrames<f64>> {
    if buffer.sample_rate != cfg.sample_rate {
        return param("buffer and MFCC sample rates differ");
    }
    Mfcc::new(*cfg)?.extract(&buffer.samples)
}

/// Cuts a clip into one-second buffers starting every half second while a
/// full window still fits.
pub fn slice_clips(signal: &[f64], sample_rate: usize) -> Result<Vec<AudioBuffer>> {
    let window = sample_rate;
    let hop = sample_rate / 2;
    if window == 0 || hop == 0 {
        return param("sample rate too small");
    }
    if signal.len() < window {
        return param(format!(
            "clip of {} samples is shorter than the {window}-sample window",
            signal.len()
        ));
    }
    let count = (signal.len() - window) / hop + 1;
    (0..count)
        .map(|i| AudioBuffer::new(signal[i * hop..i * hop + window].to_vec(), sample_rate))
        .collect()
}

pub const AUDIO_CLASSES: [TargetClass; 3] = [
    TargetClass::Drone,
    TargetClass::Helicopter,
    TargetClass::Background,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AudioPrediction {
    pub class: TargetClass,
    pub confidence: f64,
    /// Probabilities in [`AUDIO_CLASSES`] order.
    pub probabilities: [f64; 3],
}

/// Classifier behind the audio worker. A recurrent network can implement this
/// in place of the baseline.
pub trait AudioClassifier {
    fn train(&mut self, features: &[MfccFrames<f64>], labels: &[TargetClass]) -> Result<()>;
    fn predict(&self, features: &MfccFrames<f64>) -> Result<AudioPrediction>;
}

/// Nearest-centroid classifier on standardised, time-averaged MFCC vectors.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BaselineClassifier {
    mean: Vec<f64>,
    scale: Vec<f64>,
    centroids: Vec<Vec<f64>>,
}

impl BaselineClassifier {
    fn standardise(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    fn class_index(class: TargetClass) -> Result<usize> {
        AUDIO_CLASSES
            .iter()
            .position(|c| *c == class)
            .ok_or(Error::ClassNotAllowed {
                sensor: SensorId::Audio,
                class,
            })
    }
}

pub fn baseline_train(features: &[MfccFrames<f64>], labels: &[TargetClass]) -> Result<BaselineClassifier> {
    let mut clf = BaselineClassifier::default();
    clf.train(features, labels)?;
    Ok(clf)
}

impl AudioClassifier for BaselineClassifier {
    fn train(&mut self, features: &[MfccFrames<f64>], labels: &[TargetClass]) -> Result<()> {
        if features.len() != labels.len() || features.is_empty() {
            return Err(Error::Training("need one label per feature sequence".into()));
        }
        let vecs: Vec<Vec<f64>> = features.iter().map(|f| f.time_average()).collect();
        let dim = vecs[0].len();
        if vecs.iter().any(|v| v.len() != dim) {
            return Err(Error::Training("feature dimensions differ".into()));
        }
        let idx: Vec<usize> = labels
            .iter()
            .map(|l| Self::class_index(*l))
            .collect::<Result<_>>()?;
        let n = vecs.len() as f64;
        let mean: Vec<f64> = (0..dim).map(|d| vecs.iter().map(|v| v[d]).sum::<f64>() / n).collect();
        let scale: Vec<f64> = (0..dim)
            .map(|d| {
                let var = vecs.iter().map(|v| (v[d] - mean[d]).powi(2)).sum::<f64>() / n;
                if var > 1e-24 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        self.mean = mean;
        self.scale = scale;
        let mut sums = vec![vec![0.0; dim]; 3];
        let mut counts = [0usize; 3];
        for (v, &c) in vecs.iter().zip(&idx) {
            let z = self.standardise(v);
            for (s, x) in sums[c].iter_mut().zip(z) {
                *s += x;
            }
            counts[c] += 1;
        }
        if let Some(missing) = counts.iter().position(|c| *c == 0) {
            return Err(Error::Training(format!(
                "no training samples for {}",
                AUDIO_CLASSES[missing]
            )));
        }
        self.centroids = sums
            .into_iter()
            .zip(counts)
            .map(|(s, c)| s.into_iter().map(|x| x / c as f64).collect())
            .collect();
        Ok(())
    }

    fn predict(&self, features: &MfccFrames<f64>) -> Result<AudioPrediction> {
        if self.centroids.len() != 3 {
            return Err(Error::Training("classifier is not trained".into()));
        }
        let avg = features.time_average();
        if avg.len() != self.mean.len() {
            return param("feature dimension differs from training");
        }
        let z = self.standardise(&avg);
        let dist: Vec<f64> = self
            .centroids
            .iter()
            .map(|c| c.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .collect();
        let dmin = dist.iter().copied().fold(f64::INFINITY, f64::min);
        let exps: Vec<f64> = dist.iter().map(|d| (-(d - dmin)).exp()).collect();
        let total: f64 = exps.iter().sum();
        let probabilities = [exps[0] / total, exps[1] / total, exps[2] / total];
        let best = (0..3)
            .min_by(|a, b| dist[*a].partial_cmp(&dist[*b]).expect("finite distances"))
            .expect("three classes");
        Ok(AudioPrediction {
            class: AUDIO_CLASSES[best],
            confidence: probabilities[best],
            probabilities,
        })
    }
}

/// Reads a mono 16-bit PCM WAV into samples in `[-1, 1]` and its sample rate.
pub fn read_wav<R: Read>(reader: R) -> Result<(Vec<f64>, usize)> {
    let wav = hound::WavReader::new(reader).map_err(|e| Error::Malformed(e.to_string()))?;
    let spec = wav.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Malformed(format!(
            "expected mono 16-bit PCM, got {} channel(s) at {} bits",
            spec.channels, spec.bits_per_sample
        )));
    }
    let samples = wav
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Malformed(e.to_string()))?;
    Ok((samples, spec.sample_rate as usize))
}

pub fn write_wav<W: Write + Seek>(writer: W, samples: &[f64], sample_rate: usize) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: sample_rate as u32,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::new(writer, spec).map_err(|e| Error::Io(e.to_string()))?;
    for s in samples {
        w.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)
            .map_err(|e| Error::Io(e.to_string()))?;
    }
    w.finalize().map_err(|e| Error::Io(e.to_string()))
}

/// Synthetic test signals.
pub mod synth {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn tone(freq: f64, seconds: f64, sample_rate: usize, amplitude: f64) -> Vec<f64> {
        let n = (seconds * sample_rate as f64).round() as usize;
        (0..n)
            .map(|i| amplitude * (2.0 * std::f64::consts::PI * freq * i as f64 / sample_rate as f64).sin())
            .collect()
    }

    /// Linear chirp from `f0` to `f1` over the clip.
    pub fn chirp(f0: f64, f1: f64, seconds: f64, sample_rate: usize, amplitude: f64) -> Vec<f64> {
        let n = (seconds * sample_rate as f64).round() as usize;
        let k = (f1 - f0) / seconds;
        (0..n)
            .map(|i| {
                let t = i as f64 / sample_rate as f64;
                amplitude * (2.0 * std::f64::consts::PI * (f0 * t + 0.5 * k * t * t)).sin()
            })
            .collect()
    }

    /// Uniform white noise in `[-amplitude, amplitude]`.
    pub fn white_noise(seconds: f64, sample_rate: usize, amplitude: f64, seed: u64) -> Vec<f64> {
        let n = (seconds * sample_rate as f64).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| amplitude * rng.random_range(-1.0..=1.0)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_frame_geometry() {
        let cfg = MfccConfig::default();
        assert_eq!((cfg.window_length, cfg.overlap, cfg.hop()), (1323, 882, 441));
        assert_eq!(cfg.fft_len(), 2048);
        assert_eq!(cfg.frame_count(44_100), 98);
    }

    #[test]
    fn silence_gives_identical_frames() {
        let buf = AudioBuffer::new(vec![0.0; SAMPLE_RATE], SAMPLE_RATE).unwrap();
        let m = mfcc(&buf, &MfccConfig::default()).unwrap();
        assert_eq!(m.n_frames, 98);
        for f in m.frames() {
            assert_eq!(f, m.frame(0));
            assert!(f.iter().all(|c| c.abs() < 1e-9));
        }
    }

    #[test]
    fn sine_frames_stationary() {
        // 1 kHz with a 441-sample hop is a whole number of cycles per hop.
        let s = synth::tone(1000.0, 1.0, SAMPLE_RATE, 0.5);
        let m = mfcc(&AudioBuffer::new(s, SAMPLE_RATE).unwrap(), &MfccConfig::default()).unwrap();
        let f0 = m.frame(0);
        let norm = f0.iter().map(|v| v * v).sum::<f64>().sqrt();
        for f in m.frames() {
            let d = f.iter().zip(f0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(d < 1e-6 * norm, "{d}");
        }
    }

    #[test]
    fn scaling_only_moves_dropped_c0() {
        let s = synth::white_noise(1.0, SAMPLE_RATE, 0.4, 3);
        let s2: Vec<f64> = s.iter().map(|v| v * 2.0).collect();
        let cfg = MfccConfig::default();
        let a = mfcc(&AudioBuffer::new(s, SAMPLE_RATE).unwrap(), &cfg).unwrap();
        let b = mfcc(&AudioBuffer::new(s2, SAMPLE_RATE).unwrap(), &cfg).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn frame_count_arbitrary_lengths() {
        let cfg = MfccConfig::default();
        let ex = Mfcc::<f64>::new(cfg).unwrap();
        for len in [1323usize, 1324, 1764, 5000, 12_345] {
            let m = ex.extract(&vec![0.1; len]).unwrap();
            assert_eq!(m.n_frames, (len - 1323) / 441 + 1);
        }
        assert!(ex.extract(&[0.0; 100]).is_err());
    }

    #[test]
    fn f32_extractor_tracks_f64() {
        let s = synth::chirp(200.0, 4000.0, 0.2, SAMPLE_RATE, 0.5);
        let s32: Vec<f32> = s.iter().map(|v| *v as f32).collect();
        let a = Mfcc::<f64>::new(MfccConfig::default()).unwrap().extract(&s).unwrap();
        let b = Mfcc::<f32>::new(MfccConfig::default()).unwrap().extract(&s32).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - *y as f64).abs() < 1e-3 * x.abs().max(1.0));
        }
    }

    #[test]
    fn slicing_counts() {
        let fs = SAMPLE_RATE;
        assert_eq!(slice_clips(&vec![0.0; 10 * fs], fs).unwrap().len(), 19);
        assert_eq!(slice_clips(&vec![0.0; fs], fs).unwrap().len(), 1);
        assert_eq!(slice_clips(&vec![0.0; 10 * fs + fs / 2], fs).unwrap().len(), 20);
        assert!(slice_clips(&vec![0.0; fs - 1], fs).is_err());
    }

    #[test]
    fn buffer_validation() {
        assert!(AudioBuffer::new(vec![0.0; 100], SAMPLE_RATE).is_err());
        assert!(AudioBuffer::new(vec![1.5; SAMPLE_RATE], SAMPLE_RATE).is_err());
    }

    fn features(sig: &[f64]) -> MfccFrames<f64> {
        Mfcc::<f64>::new(MfccConfig::default()).unwrap().extract(sig).unwrap()
    }

    #[test]
    fn baseline_separable_and_self_consistent() {
        let fs = SAMPLE_RATE;
        let sets = [
            (TargetClass::Drone, vec![synth::tone(2000.0, 1.0, fs, 0.5), synth::tone(2200.0, 1.0, fs, 0.4)]),
            (TargetClass::Helicopter, vec![synth::tone(150.0, 1.0, fs, 0.5), synth::tone(180.0, 1.0, fs, 0.4)]),
            (TargetClass::Background, vec![synth::white_noise(1.0, fs, 0.3, 1), synth::white_noise(1.0, fs, 0.2, 2)]),
        ];
        let mut f = Vec::new();
        let mut l = Vec::new();
        for (c, sigs) in &sets {
            for s in sigs {
                f.push(features(s));
                l.push(*c);
            }
        }
        let clf = baseline_train(&f, &l).unwrap();
        for (x, y) in f.iter().zip(&l) {
            let p = clf.predict(x).unwrap();
            assert_eq!(p.class, *y);
            assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!((0.0..=1.0).contains(&p.confidence));
        }
        let single = baseline_train(&[f[0].clone(), f[2].clone(), f[4].clone()], &[l[0], l[2], l[4]]).unwrap();
        assert_eq!(single.predict(&f[2]).unwrap().class, TargetClass::Helicopter);
        assert!(matches!(
            baseline_train(&f[..4], &l[..4]),
            Err(Error::Training(_))
        ));
        assert!(baseline_train(&f[..1], &[TargetClass::Bird]).is_err());
    }

    #[test]
    fn wav_roundtrip() {
        let s = synth::tone(440.0, 0.05, SAMPLE_RATE, 0.5);
        let mut cur = std::io::Cursor::new(Vec::new());
        write_wav(&mut cur, &s, SAMPLE_RATE).unwrap();
        cur.set_position(0);
        let (back, fs) = read_wav(cur).unwrap();
        assert_eq!(fs, SAMPLE_RATE);
        assert_eq!(back.len(), s.len());
        assert!(back.iter().zip(&s).all(|(a, b)| (a - b).abs() < 1e-4));
    }
}
