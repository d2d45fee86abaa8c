#![allow(dead_code)]

use std::f64::consts::PI;

use exsynth::dsp::Waveform;
use exsynth::index::FileRecord;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn record(id: &str, group: Option<&str>, w: &Waveform) -> FileRecord {
    FileRecord {
        id: id.to_string(),
        path: None,
        group: group.map(str::to_string),
        n_samples: w.len(),
    }
}

pub fn noise(len: usize, sr: u32, seed: u64) -> Waveform {
    let mut r = rng(seed);
    Waveform::new((0..len).map(|_| r.random_range(-0.5..0.5)).collect(), sr).unwrap()
}

pub fn sine(freq: f64, amp: f64, sr: u32, len: usize) -> Waveform {
    Waveform::new(
        (0..len)
            .map(|n| amp * (2.0 * PI * freq * n as f64 / sr as f64).sin())
            .collect(),
        sr,
    )
    .unwrap()
}

/// Two-pole resonator at `freq` Hz with bandwidth `bw` Hz.
struct Resonator {
    a1: f64,
    a2: f64,
    gain: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(freq: f64, bw: f64, sr: f64) -> Self {
        let r = (-PI * bw / sr).exp();
        let theta = 2.0 * PI * freq / sr;
        Self {
            a1: 2.0 * r * theta.cos(),
            a2: -r * r,
            gain: 1.0 - r,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn retune(&mut self, freq: f64, bw: f64, sr: f64) {
        let r = (-PI * bw / sr).exp();
        self.a1 = 2.0 * r * (2.0 * PI * freq / sr).cos();
        self.a2 = -r * r;
        self.gain = 1.0 - r;
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.gain * x + self.a1 * self.y1 + self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

const VOWELS: [[f64; 3]; 8] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [300.0, 870.0, 2240.0],
    [660.0, 1720.0, 2410.0],
    [440.0, 1020.0, 2240.0],
    [490.0, 1350.0, 1690.0],
];

/// Speaker-dependent parameters of the source-filter generator.
#[derive(Clone, Copy)]
pub struct Speaker {
    pub f0: f64,
    pub tract: f64,
    pub breath: f64,
}

impl Speaker {
    pub fn random(r: &mut ChaCha8Rng) -> Self {
        Self {
            f0: r.random_range(85.0..240.0),
            tract: r.random_range(0.85..1.2),
            breath: r.random_range(0.01..0.05),
        }
    }
}

/// Speech-like audio: alternating voiced (formant-filtered pulse train with
/// intonation), fricative (filtered noise) and pause units.
pub fn utterance(sp: Speaker, seconds: f64, sr: u32, seed: u64) -> Waveform {
    let mut r = rng(seed);
    let srf = sr as f64;
    let total = (seconds * srf) as usize;
    let mut out = Vec::with_capacity(total);
    let mut formants: Vec<Resonator> = (0..3).map(|_| Resonator::new(500.0, 80.0, srf)).collect();
    let mut fric = Resonator::new(0.35 * srf, 900.0, srf);
    let mut phase = 0.0;
    while out.len() < total {
        let kind = r.random_range(0..10);
        let dur = (r.random_range(0.06..0.22) * srf) as usize;
        let amp = r.random_range(0.2..0.8);
        let v = VOWELS[r.random_range(0..VOWELS.len())];
        let next = VOWELS[r.random_range(0..VOWELS.len())];
        let f0_start = sp.f0 * r.random_range(0.85..1.15);
        let f0_end = sp.f0 * r.random_range(0.85..1.15);
        let fric_freq = r.random_range(0.2..0.42) * srf;
        fric.retune(fric_freq, 700.0, srf);
        for n in 0..dur {
            let t = n as f64 / dur.max(1) as f64;
            let env = (PI * t).sin().powf(0.6);
            let x = match kind {
                0..=6 => {
                    for (k, f) in formants.iter_mut().enumerate() {
                        let freq = sp.tract * ((1.0 - t) * v[k] + t * next[k]);
                        f.retune(freq.min(0.45 * srf), 60.0 + 40.0 * k as f64, srf);
                    }
                    let f0 = (1.0 - t) * f0_start + t * f0_end;
                    phase += f0 / srf;
                    let pulse = if phase >= 1.0 {
                        phase -= 1.0;
                        1.0
                    } else {
                        0.0
                    };
                    let src = pulse + sp.breath * r.random_range(-1.0..1.0);
                    let y: f64 = formants.iter_mut().map(|f| f.step(src)).sum();
                    amp * env * y * 4.0
                }
                7 | 8 => amp * 0.5 * env * fric.step(r.random_range(-1.0..1.0)) * 3.0,
                _ => 0.002 * r.random_range(-1.0..1.0),
            };
            out.push(x);
        }
    }
    out.truncate(total);
    let peak = out.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if peak > 0.0 {
        for x in &mut out {
            *x *= 0.8 / peak;
        }
    }
    Waveform::new(out, sr).unwrap()
}

/// `speakers x utterances` files of `seconds` each; the group is the speaker.
pub fn speech_corpus(
    speakers: usize,
    utterances: usize,
    seconds: f64,
    sr: u32,
    seed: u64,
) -> Vec<(FileRecord, Waveform)> {
    let mut r = rng(seed);
    let mut files = Vec::new();
    for s in 0..speakers {
        let sp = Speaker::random(&mut r);
        for u in 0..utterances {
            let w = utterance(sp, seconds, sr, r.random());
            let group = format!("spk{s:02}");
            files.push((record(&format!("{group}/utt{u:02}.wav"), Some(&group), &w), w));
        }
    }
    files
}

pub const GENRES: [&str; 4] = ["keys", "pads", "drums", "plucks"];

fn midi_freq(m: f64) -> f64 {
    440.0 * 2f64.powf((m - 69.0) / 12.0)
}

/// Note-based music excerpt in one of [`GENRES`].
pub fn music_track(genre: &str, seconds: f64, sr: u32, seed: u64) -> Waveform {
    let mut r = rng(seed);
    let srf = sr as f64;
    let total = (seconds * srf) as usize;
    let mut out = vec![0.0; total];
    let tempo = r.random_range(0.18..0.35);
    let root = r.random_range(48.0..60.0_f64).round();
    let scale = [0.0, 2.0, 4.0, 5.0, 7.0, 9.0, 11.0, 12.0];
    let mut t = 0.0;
    while t < seconds {
        let start = (t * srf) as usize;
        let dur = match genre {
            "pads" => tempo * 4.0,
            _ => tempo * [1.0, 1.0, 2.0, 0.5][r.random_range(0..4)],
        };
        let len = ((dur * srf) as usize).min(total.saturating_sub(start));
        let pitch = root + scale[r.random_range(0..scale.len())] + 12.0 * r.random_range(0..2) as f64;
        let f = midi_freq(pitch);
        let amp = r.random_range(0.3..0.9);
        match genre {
            "keys" => {
                for n in 0..len {
                    let tt = n as f64 / srf;
                    let env = (-tt * 3.0).exp() * (1.0 - (-tt * 400.0).exp());
                    let mut v = 0.0;
                    for h in 1..8 {
                        v += (2.0 * PI * f * h as f64 * tt).sin() / (h as f64).powf(1.3);
                    }
                    out[start + n] += amp * env * v;
                }
            }
            "pads" => {
                let chord = [0.0, 4.0, 7.0];
                for n in 0..len {
                    let tt = n as f64 / srf;
                    let env = (PI * n as f64 / len as f64).sin();
                    let mut v = 0.0;
                    for c in chord {
                        let fc = midi_freq(pitch + c);
                        v += (2.0 * PI * fc * tt).sin() + 0.3 * (2.0 * PI * 2.0 * fc * tt).sin();
                    }
                    out[start + n] += 0.4 * amp * env * v;
                }
            }
            "drums" => {
                let kick = r.random_range(0..3) == 0;
                let mut lp = 0.0;
                for n in 0..len.min((0.25 * srf) as usize) {
                    let tt = n as f64 / srf;
                    let v = if kick {
                        (2.0 * PI * (60.0 + 90.0 * (-tt * 30.0).exp()) * tt).sin() * (-tt * 12.0).exp()
                    } else {
                        let x: f64 = r.random_range(-1.0..1.0);
                        lp = 0.6 * lp + 0.4 * x;
                        (x - lp) * (-tt * 25.0).exp()
                    };
                    out[start + n] += amp * v;
                }
            }
            _ => {
                // Karplus-Strong string
                let period = (srf / f).round().max(2.0) as usize;
                let mut buf: Vec<f64> = (0..period).map(|_| r.random_range(-1.0..1.0)).collect();
                for n in 0..len {
                    let i = n % period;
                    let next = buf[(i + 1) % period];
                    let v = buf[i];
                    buf[i] = 0.996 * 0.5 * (v + next);
                    out[start + n] += amp * v;
                }
            }
        }
        t += dur;
    }
    let peak = out.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if peak > 0.0 {
        for x in &mut out {
            *x *= 0.8 / peak;
        }
    }
    Waveform::new(out, sr).unwrap()
}

/// `per_genre` tracks of every genre; the group is the genre.
pub fn music_corpus(per_genre: usize, seconds: f64, sr: u32, seed: u64) -> Vec<(FileRecord, Waveform)> {
    let mut r = rng(seed);
    let mut files = Vec::new();
    for g in GENRES {
        for i in 0..per_genre {
            let w = music_track(g, seconds, sr, r.random());
            files.push((record(&format!("{g}/track{i:02}.wav"), Some(g), &w), w));
        }
    }
    files
}
