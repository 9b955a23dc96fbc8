use ecgsynth::beat::{derive_limb_leads, read_beat_csv, split_dataset, stitch_record, write_beat_csv, Lead};
use ecgsynth::evalstats::*;
use ecgsynth::plausibility::mmd;
use ecgsynth::xml::{export_xml, import_xml, XmlMetadata};
use ecgsynth::{BeatMatrix, Category, Sex};
use proptest::prelude::*;

fn signal(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, len)
}

fn nonzero(len: usize) -> impl Strategy<Value = Vec<f64>> {
    signal(len).prop_filter("needs energy", |x| x.iter().any(|v| v.abs() > 1e-3))
}

fn beat() -> impl Strategy<Value = BeatMatrix> {
    prop::collection::vec(-3.0..3.0f64, 400 * 8).prop_map(|d| BeatMatrix::new(d).unwrap())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn prd_scale_invariant_rmse_linear(x in nonzero(32), y in signal(32), a in prop_oneof![-50.0..-0.01f64, 0.01..50.0f64]) {
        let sx: Vec<f64> = x.iter().map(|v| a * v).collect();
        let sy: Vec<f64> = y.iter().map(|v| a * v).collect();
        prop_assert!(rel(prd(&sx, &sy).unwrap(), prd(&x, &y).unwrap()) < 1e-12);
        prop_assert!(rel(rmse(&sx, &sy).unwrap(), a.abs() * rmse(&x, &y).unwrap()) < 1e-12);
        prop_assert_eq!(prd(&x, &x).unwrap(), 0.0);
        prop_assert_eq!(rmse(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn prd_against_silence_is_100(x in nonzero(24)) {
        prop_assert!((prd(&x, &[0.0; 24]).unwrap() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn sdm_summary_ignores_reference_order(
        cands in prop::collection::vec(signal(8), 1..4),
        refs in prop::collection::vec(nonzero(8), 2..6),
        rot in 0usize..6,
    ) {
        let mut shuffled = refs.clone();
        shuffled.rotate_left(rot % refs.len());
        shuffled.reverse();
        for metric in Sdm::ALL {
            let a = sdm_summary(&cands, &refs, metric).unwrap();
            let b = sdm_summary(&cands, &shuffled, metric).unwrap();
            for (p, q) in a.iter().zip(&b) {
                prop_assert_eq!(p.min, q.min);
                prop_assert_eq!(p.max, q.max);
                prop_assert!(rel(p.mean, q.mean) < 1e-12);
                prop_assert!(p.min <= p.mean && p.mean <= p.max && p.min >= 0.0);
            }
        }
    }

    #[test]
    fn mirrored_sample_has_no_skew(v in prop::collection::vec(-100.0..100.0f64, 1..30), c in -10.0..10.0f64) {
        let mut s: Vec<f64> = v.iter().map(|x| c + x).collect();
        s.extend(v.iter().map(|x| c - x));
        let h = histogram_stats(&s, 8).unwrap();
        prop_assert!(h.skewness.abs() < 1e-12, "skewness {}", h.skewness);
        prop_assert_eq!(h.counts.iter().sum::<usize>(), s.len());
        prop_assert!(h.iqr >= 0.0);
    }

    #[test]
    fn iqr_translation_invariant(v in prop::collection::vec(-100.0..100.0f64, 2..40), t in -1000.0..1000.0f64) {
        let a = histogram_stats(&v, 5).unwrap();
        let moved: Vec<f64> = v.iter().map(|x| x + t).collect();
        let b = histogram_stats(&moved, 5).unwrap();
        prop_assert!((a.iqr - b.iqr).abs() < 1e-9);
    }

    #[test]
    fn mmd_symmetric_and_nonnegative(x in prop::collection::vec(signal(6), 1..5), y in prop::collection::vec(signal(6), 1..5), s in 0.5..5.0f64) {
        let xv: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
        let yv: Vec<&[f64]> = y.iter().map(Vec::as_slice).collect();
        let a = mmd(&xv, &yv, s).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - mmd(&yv, &xv, s).unwrap()).abs() < 1e-12);
        prop_assert!(mmd(&xv, &xv, s).unwrap().abs() < 1e-12);
    }

    #[test]
    fn split_sizes(n in 1usize..500, f in 0.05..0.95f64, seed in any::<u64>()) {
        let items: Vec<usize> = (0..n).collect();
        let (train, test) = split_dataset(&items, f, seed).unwrap();
        prop_assert_eq!(train.len(), ((n as f64) * f + 1e-9).floor() as usize);
        prop_assert_eq!(train.len() + test.len(), n);
        let mut all: Vec<usize> = train.into_iter().chain(test).collect();
        all.sort_unstable();
        prop_assert_eq!(all, items);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn limb_lead_identities(b in beat()) {
        let t = derive_limb_leads(&b);
        for s in 0..400 {
            let (i, ii, iii) = (t.get(s, Lead::I), t.get(s, Lead::II), t.get(s, Lead::III));
            let (avr, avl, avf) = (t.get(s, Lead::AVR), t.get(s, Lead::AVL), t.get(s, Lead::AVF));
            prop_assert!((i + iii - ii).abs() < 1e-9);
            prop_assert!((avr + avl + avf).abs() < 1e-9);
            prop_assert!((avr + (i + ii) / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn beat_csv_round_trip(b in beat()) {
        let mut buf = Vec::new();
        write_beat_csv(&b, &mut buf).unwrap();
        prop_assert_eq!(read_beat_csv(buf.as_slice()).unwrap(), b);
    }

    #[test]
    fn xml_round_trip(b in beat(), age in prop::option::of(18.0..90.0f64), female in any::<bool>()) {
        let rec = stitch_record(&derive_limb_leads(&b));
        let meta = XmlMetadata {
            age_years: age.map(f64::round),
            sex: if female { Sex::Female } else { Sex::Male },
            target: Some(Category::Acutmi),
        };
        let text = export_xml(&rec, &meta);
        let (back, m) = import_xml(&text).unwrap();
        prop_assert_eq!(m, meta);
        for (x, y) in rec.as_slice().iter().zip(back.as_slice()) {
            prop_assert!((x - y).abs() <= 0.0005 + 1e-12);
        }
        prop_assert_eq!(export_xml(&back, &m), text);
    }
}

#[test]
fn published_split_counts() {
    let items: Vec<u32> = (0..10_013).collect();
    let (train, test) = split_dataset(&items, 0.9, 0).unwrap();
    assert_eq!((train.len(), test.len()), (9_011, 1_002));
}
