mod common;

use std::path::Path;

use exsynth::dsp::Waveform;
use exsynth::io::{read_wav, scan_corpus, write_wav, AnalysisDocument};
use exsynth::Error;
use hound::{SampleFormat, WavSpec, WavWriter};
use proptest::prelude::*;
use rand::Rng;

fn write_raw_i16(path: &Path, channels: u16, samples: &[i16]) {
    let spec = WavSpec { channels, sample_rate: 8000, bits_per_sample: 16, sample_format: SampleFormat::Int };
    let mut w = WavWriter::create(path, spec).unwrap();
    for s in samples {
        w.write_sample(*s).unwrap();
    }
    w.finalize().unwrap();
}

#[test]
fn full_scale_integer_reads_below_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.wav");
    write_raw_i16(&p, 1, &[32767, -32768, 0]);
    let w = read_wav(&p).unwrap();
    assert_eq!(w.samples, vec![32767.0 / 32768.0, -1.0, 0.0]);
    assert!((w.samples[0] - 0.99997).abs() < 1e-5);
}

#[test]
fn stereo_is_averaged() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.wav");
    write_raw_i16(&p, 2, &[1000, -1000, 20000, -20000, 4096, 0]);
    let w = read_wav(&p).unwrap();
    assert_eq!(w.samples, vec![0.0, 0.0, 0.0625]);
}

#[test]
fn float_input_is_read_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("f.wav");
    let spec = WavSpec { channels: 1, sample_rate: 22050, bits_per_sample: 32, sample_format: SampleFormat::Float };
    let mut w = WavWriter::create(&p, spec).unwrap();
    for s in [0.25f32, -0.5, 0.75] {
        w.write_sample(s).unwrap();
    }
    w.finalize().unwrap();
    let r = read_wav(&p).unwrap();
    assert_eq!(r.sample_rate, 22050);
    assert_eq!(r.samples, vec![0.25, -0.5, 0.75]);
}

#[test]
fn silence_and_clipping() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("z.wav");
    write_wav(&Waveform::new(vec![0.0; 500], 8000).unwrap(), &p).unwrap();
    assert!(read_wav(&p).unwrap().samples.iter().all(|v| *v == 0.0));
    let loud = Waveform::new(vec![1.5, -2.0, 0.5, 1.0], 8000).unwrap();
    assert_eq!(write_wav(&loud, &p).unwrap(), 3);
    let back = read_wav(&p).unwrap();
    assert_eq!(back.samples, vec![32767.0 / 32768.0, -1.0, 0.5, 32767.0 / 32768.0]);
}

#[test]
fn missing_and_malformed_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(read_wav(&dir.path().join("nope.wav")), Err(Error::Io { .. })));
    let bad = dir.path().join("bad.wav");
    std::fs::write(&bad, b"RIFF0000WAVEjunk").unwrap();
    assert!(matches!(read_wav(&bad), Err(Error::Wav { .. })));
}

#[test]
fn corpus_scan_assigns_groups() {
    let dir = tempfile::tempdir().unwrap();
    let w = common::sine(440.0, 0.3, 8000, 2000);
    for rel in ["jazz/a.wav", "jazz/b.WAV", "rock/deep/c.wav", "top.wav"] {
        let p = dir.path().join(rel);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        write_wav(&w, &p).unwrap();
    }
    std::fs::write(dir.path().join("jazz/notes.txt"), "x").unwrap();
    let files = scan_corpus(dir.path()).unwrap();
    let ids: Vec<_> = files.iter().map(|f| f.id.as_str()).collect();
    assert_eq!(ids, vec!["jazz/a.wav", "jazz/b.WAV", "rock/deep/c.wav", "top.wav"]);
    let groups: Vec<_> = files.iter().map(|f| f.group.as_deref()).collect();
    assert_eq!(groups, vec![Some("jazz"), Some("jazz"), Some("rock"), None]);
}

#[test]
fn analysis_documents_are_validated() {
    let ok = r#"{"schema":1,"track_id":"t","sample_rate":8000,"segments":[
        {"start":0.0,"duration":0.5,"pitches":[0,0,0,0,0,0,0,0,0,0,0,1],"timbre":[0,0,0,0,0,0,0,0,0,0,0,0],
         "loudness_start":-30,"loudness_max":-10,"loudness_max_time":0.1},
        {"start":0.5,"duration":0.25,"pitches":[1,0,0,0,0,0,0,0,0,0,0,0],"timbre":[0,0,0,0,0,0,0,0,0,0,0,0],
         "loudness_start":-20,"loudness_max":-12,"loudness_max_time":0.0}]}"#;
    let doc = AnalysisDocument::from_json(ok).unwrap();
    assert_eq!(doc.end_seconds(), 0.75);
    let (segs, feats) = doc.to_segments(8000).unwrap();
    assert_eq!(segs.len(), 2);
    assert_eq!((segs[1].start, segs[1].length), (4000, 2000));
    assert!((feats[0].to_vec()[26] - 0.2).abs() < 1e-12);

    let unordered = ok.replace("\"start\":0.5", "\"start\":0.0");
    match AnalysisDocument::from_json(&unordered) {
        Err(Error::Schema { path, .. }) => assert_eq!(path, "segments[1].start"),
        other => panic!("{other:?}"),
    }
    let extra = ok.replacen("\"duration\":0.5", "\"duration\":0.5,\"bogus\":1", 1);
    assert!(matches!(AnalysisDocument::from_json(&extra), Err(Error::Schema { .. })));
    let short = ok.replacen("0,0,0,0,0,0,0,0,0,0,0,1", "0,1", 1);
    assert!(AnalysisDocument::from_json(&short).is_err());
    let late = ok.replacen("\"loudness_max_time\":0.1", "\"loudness_max_time\":0.9", 1);
    assert!(AnalysisDocument::from_json(&late).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pcm_roundtrip_error_is_below_one_lsb(seed in 0u64..10_000, len in 1usize..2000) {
        let mut r = common::rng(seed);
        let w = Waveform::new((0..len).map(|_| r.random_range(-0.999..0.999)).collect(), 16000).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.wav");
        prop_assert_eq!(write_wav(&w, &p).unwrap(), 0);
        let back = read_wav(&p).unwrap();
        prop_assert_eq!(back.len(), w.len());
        prop_assert_eq!(back.sample_rate, 16000);
        for (a, b) in w.samples.iter().zip(&back.samples) {
            prop_assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }
}
