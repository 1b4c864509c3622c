//! Property tests for the algebraic invariants.

use proptest::prelude::*;

use ironylab_core::corpus::{sample, Corpus, Label, StatementRecord};
use ironylab_core::gateway::{CompletionRequest, Provider};
use ironylab_core::metrics::{b_measure, cosine_similarity, histogram, three_ranges, RangeBounds};
use ironylab_core::normalize::{extract_label, normalize};
use ironylab_core::pipeline::vote;

fn ballot() -> impl Strategy<Value = Option<Label>> {
    prop_oneof![Just(None), Just(Some(Label::Ironic)), Just(Some(Label::NonIronic))]
}

fn records(labels: &[bool]) -> Vec<StatementRecord> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &ironic)| StatementRecord {
            id: format!("r{i:04}"),
            text: format!("statement {i}"),
            gold: if ironic { Label::Ironic } else { Label::NonIronic },
            intended: None,
            source: "prop".into(),
        })
        .collect()
}

proptest! {
    #[test]
    fn vote_is_permutation_invariant(ballots in prop::collection::vec(ballot(), 0..7), seed in any::<u64>()) {
        let mut shuffled = ballots.clone();
        let n = shuffled.len();
        if n > 1 {
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
        }
        let a = vote(&ballots);
        let b = vote(&shuffled);
        prop_assert_eq!(a.final_label, b.final_label);
        prop_assert_eq!(a.abstentions, b.abstentions);
        prop_assert_eq!(a.unanimous, b.unanimous);
    }

    #[test]
    fn cosine_is_symmetric_and_scale_invariant(
        pair in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..16),
        k in 0.01f64..100.0,
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pair.into_iter().unzip();
        prop_assume!(a.iter().any(|x| x.abs() > 1e-6) && b.iter().any(|x| x.abs() > 1e-6));
        let ab = cosine_similarity(&a, &b).unwrap();
        let ba = cosine_similarity(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        let scaled: Vec<f64> = a.iter().map(|x| x * k).collect();
        prop_assert!((cosine_similarity(&scaled, &b).unwrap() - ab).abs() < 1e-9);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&ab));
    }

    #[test]
    fn histogram_and_ranges_partition_scores(
        scores in prop::collection::vec(-1.0f64..=1.0, 0..200),
        lo in 0.0f64..1.0,
        gap in 0.0f64..1.0,
    ) {
        prop_assert_eq!(histogram(&scores).iter().sum::<usize>(), scores.len());
        let bounds = RangeBounds { moderate: lo, almost_identical: (lo + gap).min(1.0) };
        let c = three_ranges(&scores, bounds);
        prop_assert_eq!(c.notable + c.moderate + c.almost_identical, scores.len());
    }

    #[test]
    fn b_measure_is_monotone(f in -50.0f64..120.0, h in 0.0f64..=3.0, df in 0.0f64..50.0, dh in 0.0f64..3.0) {
        let base = b_measure(f, h).unwrap();
        prop_assert!(b_measure(f + df, h).unwrap() >= base);
        prop_assert!(b_measure(f, (h + dh).min(3.0)).unwrap() >= base);
    }

    #[test]
    fn normalize_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..512), p in any::<bool>()) {
        let raw = String::from_utf8_lossy(&bytes);
        let out = normalize(&raw, p);
        prop_assert_eq!(out.raw, raw.to_string());
        if let Some(x) = out.probability {
            prop_assert!((0.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn normalize_survives_json_like_noise(raw in r#"[\{\}":a-z0-9 .,\n`“”]{0,200}"#) {
        let _ = normalize(&raw, true);
        let _ = normalize(&raw, false);
    }

    #[test]
    fn extract_label_is_idempotent(raw in r#"(prose [a-z ]{0,30}\n)?\{"irony": ?(0|1|"0"|"1"|2)\}"#) {
        let (first, _) = extract_label(&raw);
        if let Some(label) = first {
            let reserialized = format!("{{\"irony\": {}}}", label.as_int());
            prop_assert_eq!(extract_label(&reserialized).0, Some(label));
        }
    }

    #[test]
    fn stratified_sample_keeps_ratio(labels in prop::collection::vec(any::<bool>(), 2..120), frac in 0.05f64..1.0, seed in any::<u64>()) {
        let corpus = Corpus::new("prop", records(&labels)).unwrap();
        let n = ((labels.len() as f64 * frac).ceil() as usize).clamp(1, labels.len());
        let s = sample(&corpus, n, seed, true).unwrap();
        prop_assert_eq!(s.len(), n);
        let full_ratio = labels.iter().filter(|&&b| b).count() as f64 / labels.len() as f64;
        let ratio = s.records().iter().filter(|r| r.gold == Label::Ironic).count() as f64 / n as f64;
        prop_assert!((ratio - full_ratio).abs() <= 1.0 / n as f64 + 1e-12);
        let again = sample(&corpus, n, seed, true).unwrap();
        prop_assert_eq!(again, s);
    }

    #[test]
    fn jsonl_round_trip(labels in prop::collection::vec(any::<bool>(), 1..40), texts in prop::collection::vec(".{1,40}", 40)) {
        let mut recs = records(&labels);
        for (r, t) in recs.iter_mut().zip(&texts) {
            prop_assume!(!t.trim().is_empty());
            r.text = t.clone();
            r.intended = (t.len() % 2 == 0).then(|| t.to_uppercase());
        }
        let corpus = Corpus::new("prop", recs).unwrap();
        let tmp = tempfile::NamedTempFile::new().unwrap();
        corpus.write_jsonl(std::fs::File::create(tmp.path()).unwrap()).unwrap();
        let back = Corpus::read_jsonl("prop", tmp.path()).unwrap();
        prop_assert_eq!(back, corpus);
    }

    #[test]
    fn request_hash_is_stable_and_sensitive(prompt in ".{0,80}", other in ".{0,80}", t in 0.0f64..2.0) {
        let mut a = CompletionRequest::new(Provider::Mock, "m", prompt.clone());
        a.temperature = t;
        let b = a.clone();
        prop_assert_eq!(a.hash(), b.hash());
        prop_assert_eq!(a.hash().len(), 64);
        let mut c = a.clone();
        c.prompt = other.clone();
        prop_assert_eq!(a.hash() == c.hash(), prompt == other);
    }
}
