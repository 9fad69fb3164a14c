//! Synthetic, label-controllable stand-in for a private clinical speech
//! corpus.
//!
//! Three classes (HC, MCI, AD) differ along fluency (pause rate), prosody
//! (pitch variability) and rhythm (syllable rate). A `separability` scalar
//! interpolates the class-profile means between a common center (0.0, labels
//! carry no signal) and full separation (1.0), so task difficulty is tunable.

mod synth;

pub use synth::{
    estimated_syllable_rate, pause_fraction, synth_utterance, two_feature_probe_accuracy,
    zero_crossing_f0, UtteranceFeatures,
};

use crate::dsp::{read_wav, write_wav, Waveform, SAMPLE_RATE};
use crate::error::{CoreError, Result};
use crate::par::maybe_par_map_indexed;
use crate::rng::{derive_rng, derive_rng_indexed};
use rand::seq::SliceRandom;
use rand::Rng;
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassLabel {
    Hc = 0,
    Mci = 1,
    Ad = 2,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Hc, ClassLabel::Mci, ClassLabel::Ad];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Hc => "HC",
            ClassLabel::Mci => "MCI",
            ClassLabel::Ad => "AD",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "HC" => Ok(ClassLabel::Hc),
            "MCI" => Ok(ClassLabel::Mci),
            "AD" => Ok(ClassLabel::Ad),
            other => Err(CoreError::Config(format!("unknown class label {other:?}"))),
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sex {
    Male,
    Female,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(CoreError::Config(format!("unknown split {other:?}"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Distributions of the three class-discriminative speech axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassProfile {
    pub label: ClassLabel,
    /// pauses per second: (mean, sd)
    pub pause_rate: (f64, f64),
    /// pitch random-walk stationary sd in semitones: (mean, sd)
    pub pitch_var: (f64, f64),
    /// amplitude-modulation rate in Hz: (mean, sd)
    pub syllable_rate: (f64, f64),
}

/// Fully separated anchor means; `separability` interpolates each class mean
/// toward the cross-class center.
const PAUSE_ANCHORS: [f64; 3] = [0.20, 0.55, 0.90];
const PITCH_ANCHORS: [f64; 3] = [2.0, 1.4, 0.8];
const SYLLABLE_ANCHORS: [f64; 3] = [4.5, 3.6, 2.7];

pub fn default_profiles(separability: f64) -> [ClassProfile; 3] {
    let lerp = |anchors: [f64; 3], i: usize| {
        let center = (anchors[0] + anchors[1] + anchors[2]) / 3.0;
        center + separability * (anchors[i] - center)
    };
    let mk = |i: usize| ClassProfile {
        label: ClassLabel::ALL[i],
        pause_rate: (lerp(PAUSE_ANCHORS, i), [0.06, 0.10, 0.14][i]),
        pitch_var: (lerp(PITCH_ANCHORS, i), 0.25),
        syllable_rate: (lerp(SYLLABLE_ANCHORS, i), 0.25),
    };
    [mk(0), mk(1), mk(2)]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerProfile {
    pub speaker_id: String,
    pub sex: Sex,
    /// base fundamental in Hz; male 85-155, female 165-255.
    pub base_f0: f64,
    /// multiplicative shift of the spectral shaping peak.
    pub formant_shift: f64,
    pub label: ClassLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub utterance_id: String,
    /// path relative to the corpus root
    pub wav_path: String,
    pub label: ClassLabel,
    pub speaker_id: String,
    pub split: Split,
    pub client_id: Option<String>,
}

/// Declarative description of the corpus: utterances, labels, speakers and
/// split/client assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.tsv";

impl CorpusManifest {
    pub fn manifest_path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    /// One record per line, tab-separated:
    /// `utterance_id  wav_path  label  speaker_id  split  client_id|-`.
    pub fn write(&self) -> Result<()> {
        let mut text = String::new();
        for e in &self.entries {
            text.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                e.utterance_id,
                e.wav_path,
                e.label,
                e.speaker_id,
                e.split,
                e.client_id.as_deref().unwrap_or("-"),
            ));
        }
        std::fs::write(self.manifest_path(), text)?;
        Ok(())
    }

    pub fn read(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)?;
        let mut entries = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 6 {
                return Err(CoreError::Config(format!(
                    "{}:{}: expected 6 tab-separated fields, got {}",
                    path.display(),
                    ln + 1,
                    parts.len()
                )));
            }
            entries.push(ManifestEntry {
                utterance_id: parts[0].to_string(),
                wav_path: parts[1].to_string(),
                label: ClassLabel::parse(parts[2])?,
                speaker_id: parts[3].to_string(),
                split: Split::parse(parts[4])?,
                client_id: if parts[5] == "-" { None } else { Some(parts[5].to_string()) },
            });
        }
        let manifest = Self { root: root.to_path_buf(), entries };
        manifest.validate()?;
        Ok(manifest)
    }

    /// Structural invariants: one split, one optional client and one label
    /// per speaker; clients only hold training data.
    pub fn validate(&self) -> Result<()> {
        use std::collections::BTreeMap;
        let mut split_of: BTreeMap<&str, Split> = BTreeMap::new();
        let mut client_of: BTreeMap<&str, Option<&str>> = BTreeMap::new();
        let mut label_of: BTreeMap<&str, ClassLabel> = BTreeMap::new();
        for e in &self.entries {
            let spk = e.speaker_id.as_str();
            if *split_of.entry(spk).or_insert(e.split) != e.split {
                return Err(CoreError::Config(format!(
                    "speaker {spk} appears in more than one split"
                )));
            }
            let client = e.client_id.as_deref();
            if *client_of.entry(spk).or_insert(client) != client {
                return Err(CoreError::Config(format!(
                    "speaker {spk} assigned to more than one client"
                )));
            }
            if *label_of.entry(spk).or_insert(e.label) != e.label {
                return Err(CoreError::Config(format!(
                    "speaker {spk} carries more than one label"
                )));
            }
            if e.client_id.is_some() && e.split != Split::Train {
                return Err(CoreError::Config(format!(
                    "utterance {} holds a client assignment outside the train split",
                    e.utterance_id
                )));
            }
        }
        Ok(())
    }

    pub fn split_entries(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    pub fn client_entries(&self, client_id: &str) -> Vec<&ManifestEntry> {
        self.entries
            .iter()
            .filter(|e| e.client_id.as_deref() == Some(client_id))
            .collect()
    }

    pub fn client_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .entries
            .iter()
            .filter_map(|e| e.client_id.clone())
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn load_wave(&self, entry: &ManifestEntry) -> Result<Waveform> {
        read_wav(&self.root.join(&entry.wav_path))
    }
}

/// Generation parameters for [`gen_corpus`].
#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub speakers_per_class_per_sex: usize,
    pub utterances_per_speaker: usize,
    pub class_ratios: [f64; 3],
    pub separability: f64,
    pub clip_seconds: f64,
    pub train_speakers_per_class: usize,
    pub dev_speakers_per_class: usize,
    pub test_speakers_per_class: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        // 30 speakers x ~12 six-second clips ~= 36 minutes of audio; class
        // ratios mirror 1712/1380/1208.
        Self {
            speakers_per_class_per_sex: 5,
            utterances_per_speaker: 12,
            class_ratios: [0.40, 0.32, 0.28],
            separability: 0.7,
            clip_seconds: 6.0,
            train_speakers_per_class: 6,
            dev_speakers_per_class: 2,
            test_speakers_per_class: 2,
            seed: 7,
        }
    }
}

impl CorpusSpec {
    pub fn speakers_per_class(&self) -> usize {
        2 * self.speakers_per_class_per_sex
    }

    pub fn n_speakers(&self) -> usize {
        3 * self.speakers_per_class()
    }

    fn validate(&self) -> Result<()> {
        if self.speakers_per_class_per_sex == 0 || self.utterances_per_speaker == 0 {
            return Err(CoreError::Config("corpus spec needs speakers and utterances".into()));
        }
        let need = self.train_speakers_per_class
            + self.dev_speakers_per_class
            + self.test_speakers_per_class;
        if need > self.speakers_per_class() {
            return Err(CoreError::Config(format!(
                "splits need {need} speakers per class, only {} available",
                self.speakers_per_class()
            )));
        }
        if self.train_speakers_per_class == 0
            || self.dev_speakers_per_class == 0
            || self.test_speakers_per_class == 0
        {
            return Err(CoreError::Config("every split needs at least one speaker per class".into()));
        }
        if self.clip_seconds < 6.0 {
            return Err(CoreError::Config("clips must be at least 6 seconds".into()));
        }
        let ratio_sum: f64 = self.class_ratios.iter().sum();
        if (ratio_sum - 1.0).abs() > 1e-6 {
            return Err(CoreError::Config(format!("class ratios sum to {ratio_sum}, not 1")));
        }
        Ok(())
    }
}

/// Largest-remainder split of `total` into parts proportional to `ratios`.
fn apportion(total: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let mut counts = [0usize; 3];
    let mut remainders: Vec<(usize, f64)> = Vec::new();
    let mut assigned = 0;
    for (i, &r) in ratios.iter().enumerate() {
        let exact = total as f64 * r;
        counts[i] = exact.floor() as usize;
        assigned += counts[i];
        remainders.push((i, exact - exact.floor()));
    }
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for k in 0..total - assigned {
        counts[remainders[k % 3].0] += 1;
    }
    counts
}

/// Generate speakers, synthesize WAV files and write the manifest.
/// Utterance synthesis is parallel per utterance; each utterance owns an RNG
/// stream derived from `(seed, utterance_id)`, so scheduling never changes
/// the audio.
pub fn gen_corpus(spec: &CorpusSpec, root: &Path) -> Result<CorpusManifest> {
    spec.validate()?;
    let profiles = default_profiles(spec.separability);
    std::fs::create_dir_all(root.join("wavs"))?;

    // speakers: deterministic id order, class-major then sex
    let mut speakers = Vec::new();
    for (ci, class) in ClassLabel::ALL.iter().enumerate() {
        for si in 0..spec.speakers_per_class() {
            let idx = ci * spec.speakers_per_class() + si;
            let sex = if si % 2 == 0 { Sex::Male } else { Sex::Female };
            let mut rng = derive_rng_indexed(spec.seed, "speaker", idx as u64);
            let base_f0 = match sex {
                Sex::Male => rng.gen_range(85.0..155.0),
                Sex::Female => rng.gen_range(165.0..255.0),
            };
            let formant_shift = rng.gen_range(0.9..1.1);
            speakers.push(SpeakerProfile {
                speaker_id: format!("spk{idx:03}"),
                sex,
                base_f0,
                formant_shift,
                label: *class,
            });
        }
    }

    // split assignment: shuffle within each class
    let mut split_of: std::collections::BTreeMap<String, Split> = std::collections::BTreeMap::new();
    for (ci, _) in ClassLabel::ALL.iter().enumerate() {
        let mut ids: Vec<String> = speakers
            .iter()
            .filter(|s| s.label.index() == ci)
            .map(|s| s.speaker_id.clone())
            .collect();
        let mut rng = derive_rng_indexed(spec.seed, "splits", ci as u64);
        ids.shuffle(&mut rng);
        for (k, id) in ids.into_iter().enumerate() {
            let split = if k < spec.train_speakers_per_class {
                Split::Train
            } else if k < spec.train_speakers_per_class + spec.dev_speakers_per_class {
                Split::Dev
            } else if k
                < spec.train_speakers_per_class
                    + spec.dev_speakers_per_class
                    + spec.test_speakers_per_class
            {
                Split::Test
            } else {
                Split::Train // spare speakers reinforce the training split
            };
            split_of.insert(id, split);
        }
    }

    // per-class utterance totals by ratio, then spread over class speakers
    let total_utts = spec.n_speakers() * spec.utterances_per_speaker;
    let per_class = apportion(total_utts, &spec.class_ratios);
    let mut entries = Vec::new();
    for (ci, _) in ClassLabel::ALL.iter().enumerate() {
        let class_speakers: Vec<&SpeakerProfile> =
            speakers.iter().filter(|s| s.label.index() == ci).collect();
        let n_spk = class_speakers.len();
        let base = per_class[ci] / n_spk;
        let extra = per_class[ci] % n_spk;
        for (k, spk) in class_speakers.iter().enumerate() {
            let n_utt = base + usize::from(k < extra);
            for j in 0..n_utt {
                let utterance_id = format!("{}_u{j:02}", spk.speaker_id);
                entries.push(ManifestEntry {
                    wav_path: format!("wavs/{utterance_id}.wav"),
                    utterance_id,
                    label: spk.label,
                    speaker_id: spk.speaker_id.clone(),
                    split: split_of[&spk.speaker_id],
                    client_id: None,
                });
            }
        }
    }

    // synthesize; index-ordered parallel map
    let speaker_of = |id: &str| speakers.iter().find(|s| s.speaker_id == id).expect("known speaker");
    let results: Vec<Result<()>> = maybe_par_map_indexed(entries.len(), |i| {
        let e = &entries[i];
        let spk = speaker_of(&e.speaker_id);
        let profile = &profiles[e.label.index()];
        let mut rng = derive_rng(spec.seed, &format!("utt/{}", e.utterance_id));
        let wave = synth_utterance(spk, profile, spec.clip_seconds, &mut rng)?;
        write_wav(&root.join(&e.wav_path), &wave)
    });
    for r in results {
        r?;
    }

    let manifest = CorpusManifest { root: root.to_path_buf(), entries };
    manifest.validate()?;
    manifest.write()?;
    Ok(manifest)
}

/// Cut consecutive non-overlapping 6-second clips; the remainder is dropped.
pub fn segment_6s(wave: &Waveform) -> Result<Vec<Waveform>> {
    let clip_len = (6 * wave.sample_rate) as usize;
    if wave.samples.len() < clip_len {
        return Err(CoreError::InsufficientAudio(format!(
            "{:.2} s of audio, need at least 6 s",
            wave.duration_seconds()
        )));
    }
    Ok(wave
        .samples
        .chunks_exact(clip_len)
        .map(|c| Waveform { samples: c.to_vec(), sample_rate: wave.sample_rate })
        .collect())
}

/// Deal training speakers round-robin per class across `m` clients
/// (`client00`, `client01`, ...); dev and test stay central.
pub fn partition_clients(manifest: &mut CorpusManifest, m: usize, seed: u64) -> Result<()> {
    if m == 0 {
        return Err(CoreError::Config("need at least one client".into()));
    }
    let mut assignment: std::collections::BTreeMap<String, String> =
        std::collections::BTreeMap::new();
    for (ci, _) in ClassLabel::ALL.iter().enumerate() {
        let mut ids: Vec<String> = manifest
            .entries
            .iter()
            .filter(|e| e.split == Split::Train && e.label.index() == ci)
            .map(|e| e.speaker_id.clone())
            .collect();
        ids.sort();
        ids.dedup();
        if ids.len() < m {
            return Err(CoreError::Config(format!(
                "class {} has {} training speakers, need at least {m} for {m} clients",
                ClassLabel::ALL[ci],
                ids.len()
            )));
        }
        let mut rng = derive_rng_indexed(seed, "partition", ci as u64);
        ids.shuffle(&mut rng);
        // rotate the dealing start per class so leftover speakers spread
        // across clients instead of piling onto client00
        for (k, id) in ids.into_iter().enumerate() {
            assignment.insert(id, format!("client{:02}", (k + ci) % m));
        }
    }
    for e in &mut manifest.entries {
        if e.split == Split::Train {
            e.client_id = Some(assignment[&e.speaker_id].clone());
        }
    }
    manifest.validate()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apportion_mirrors_published_class_ratio() {
        // 1712/1380/1208 of 4300 utterances ~= (0.398, 0.321, 0.281)
        let counts = apportion(360, &[0.40, 0.32, 0.28]);
        assert_eq!(counts.iter().sum::<usize>(), 360);
        for (i, &c) in counts.iter().enumerate() {
            let got = c as f64 / 360.0;
            let want = [0.40, 0.32, 0.28][i];
            assert!((got - want).abs() / want < 0.05, "class {i}: {got} vs {want}");
        }
    }

    #[test]
    fn default_profiles_are_ordered() {
        let p = default_profiles(0.7);
        assert!(p[0].pause_rate.0 < p[1].pause_rate.0 && p[1].pause_rate.0 < p[2].pause_rate.0);
        assert!(p[2].syllable_rate.0 < p[1].syllable_rate.0 && p[1].syllable_rate.0 < p[0].syllable_rate.0);
        assert!(p[2].pitch_var.0 < p[1].pitch_var.0 && p[1].pitch_var.0 < p[0].pitch_var.0);
    }

    #[test]
    fn zero_separability_collapses_means() {
        let p = default_profiles(0.0);
        assert!((p[0].pause_rate.0 - p[2].pause_rate.0).abs() < 1e-12);
        assert!((p[0].syllable_rate.0 - p[1].syllable_rate.0).abs() < 1e-12);
    }

    #[test]
    fn segment_cuts_floor_clips() {
        let wave = Waveform::new(vec![0.1; 20 * 16000], 16000).unwrap();
        let clips = segment_6s(&wave).unwrap();
        assert_eq!(clips.len(), 3);
        assert!(clips.iter().all(|c| c.samples.len() == 96_000));
    }

    #[test]
    fn segment_exact_six_seconds_is_identity() {
        let samples: Vec<f32> = (0..96_000).map(|i| (i as f32 * 1e-4).sin() * 0.5).collect();
        let wave = Waveform::new(samples.clone(), 16000).unwrap();
        let clips = segment_6s(&wave).unwrap();
        assert_eq!(clips.len(), 1);
        assert_eq!(clips[0].samples, samples);
    }

    #[test]
    fn segment_under_six_seconds_errors() {
        let wave = Waveform::new(vec![0.0; 96_000 - 1600], 16000).unwrap();
        assert!(matches!(
            segment_6s(&wave),
            Err(CoreError::InsufficientAudio(_))
        ));
    }

    fn manifest_with_train_speakers(n_per_class: usize) -> CorpusManifest {
        let mut entries = Vec::new();
        for ci in 0..3 {
            for s in 0..n_per_class {
                let spk = format!("spk{ci}{s:02}");
                for u in 0..2 {
                    entries.push(ManifestEntry {
                        utterance_id: format!("{spk}_u{u}"),
                        wav_path: format!("wavs/{spk}_u{u}.wav"),
                        label: ClassLabel::from_index(ci).unwrap(),
                        speaker_id: spk.clone(),
                        split: Split::Train,
                        client_id: None,
                    });
                }
            }
        }
        CorpusManifest { root: PathBuf::from("/nonexistent"), entries }
    }

    #[test]
    fn partition_single_client_takes_everyone() {
        let mut m = manifest_with_train_speakers(4);
        partition_clients(&mut m, 1, 3).unwrap();
        assert!(m.entries.iter().all(|e| e.client_id.as_deref() == Some("client00")));
    }

    #[test]
    fn partition_three_clients_balances_speakers_and_classes() {
        // 10 speakers per class = 30 training speakers
        let mut m = manifest_with_train_speakers(10);
        partition_clients(&mut m, 3, 3).unwrap();
        let mut per_client: std::collections::BTreeMap<String, Vec<&ManifestEntry>> =
            Default::default();
        for e in &m.entries {
            per_client.entry(e.client_id.clone().unwrap()).or_default().push(e);
        }
        assert_eq!(per_client.len(), 3);
        for (cid, entries) in &per_client {
            let mut speakers: Vec<&str> = entries.iter().map(|e| e.speaker_id.as_str()).collect();
            speakers.sort();
            speakers.dedup();
            assert_eq!(speakers.len(), 10, "client {cid}");
            for ci in 0..3 {
                let count = speakers.iter().filter(|s| s.starts_with(&format!("spk{ci}"))).count();
                assert!((3..=4).contains(&count), "client {cid} class {ci}: {count}");
            }
        }
    }

    #[test]
    fn partition_is_reproducible() {
        let mut a = manifest_with_train_speakers(6);
        let mut b = manifest_with_train_speakers(6);
        partition_clients(&mut a, 3, 99).unwrap();
        partition_clients(&mut b, 3, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn partition_needs_enough_speakers() {
        let mut m = manifest_with_train_speakers(2);
        assert!(matches!(
            partition_clients(&mut m, 3, 0),
            Err(CoreError::Config(_))
        ));
    }

    #[test]
    fn validate_rejects_speaker_in_two_splits() {
        let mut m = manifest_with_train_speakers(2);
        m.entries[0].split = Split::Dev;
        assert!(m.validate().is_err());
    }

    #[test]
    fn generated_corpus_is_disjoint_deterministic_and_six_seconds() {
        let dir = tempfile::tempdir().unwrap();
        let spec = CorpusSpec {
            speakers_per_class_per_sex: 2,
            utterances_per_speaker: 3,
            train_speakers_per_class: 2,
            dev_speakers_per_class: 1,
            test_speakers_per_class: 1,
            seed: 41,
            ..CorpusSpec::default()
        };
        let root_a = dir.path().join("a");
        let root_b = dir.path().join("b");
        let ma = gen_corpus(&spec, &root_a).unwrap();
        let mb = gen_corpus(&spec, &root_b).unwrap();
        assert_eq!(ma.entries.len(), 12 * 3);
        ma.validate().unwrap();
        // identical audio bytes under the same seed
        for (ea, eb) in ma.entries.iter().zip(&mb.entries).take(4) {
            let ba = std::fs::read(root_a.join(&ea.wav_path)).unwrap();
            let bb = std::fs::read(root_b.join(&eb.wav_path)).unwrap();
            assert_eq!(ba, bb);
        }
        // exactly 6 s per clip, valid range, every split populated
        let w = ma.load_wave(&ma.entries[0]).unwrap();
        assert_eq!(w.samples.len(), 96_000);
        assert_eq!(w.sample_rate, SAMPLE_RATE);
        assert!(w.samples.iter().all(|v| v.is_finite() && v.abs() <= 1.0));
        for split in [Split::Train, Split::Dev, Split::Test] {
            assert!(!ma.split_entries(split).is_empty(), "{split} empty");
        }
        // read back from disk
        let reread = CorpusManifest::read(&root_a).unwrap();
        assert_eq!(reread, ma);
    }
}
