//! Property tests for the library's cross-operation invariants.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{TimeZone, Utc};
use proptest::prelude::*;

use policyscope_core::agreement::{cohen_kappa, KappaOutcome};
use policyscope_core::attention::{demographic_exposure, ExposureAxis, PredictionSet};
use policyscope_core::codebook::{apply_grouping, subset_filter, Codebook};
use policyscope_core::evaluation::{micro_average, per_class_prf};
use policyscope_core::ingest::{
    corpus_totals, dedupe, filter_language, match_candidate, midpoint, AdRecord,
    CandidateAliasSet, DemographicCell, Gender, ValueRange,
};
use policyscope_core::labeling::{
    distrib_aggregate, stratified_test_split, vm_aggregate, AnnotationVote, LabelMatrix,
    LabelMode, SplitParams, VoteAssembly,
};
use policyscope_core::model::{predict, LinearHead, ThresholdVector};
use policyscope_core::textfeat::{
    augment_dataset, fit_tfidf, transform, AugmentPlan, FeatureSource, FeatureVector,
    ReverseWordsParaphrase,
};

fn ad(id: &str, hour_offset: u32, body: &str, langs: &[&str], range: (u64, Option<u64>)) -> AdRecord {
    AdRecord {
        ad_id: id.to_string(),
        page_id: "p".to_string(),
        page_name: "P".to_string(),
        creation_time: Utc.with_ymd_and_hms(2022, 1, 1, 0, 0, 0).unwrap()
            + chrono::Duration::hours(hour_offset as i64),
        creative_body: body.to_string(),
        bylines: None,
        languages: langs.iter().map(|l| l.to_string()).collect(),
        impressions: ValueRange::new(range.0, range.1).unwrap(),
        currency: "EUR".to_string(),
        spend: ValueRange::closed(0, 99).unwrap(),
        demographics: Vec::new(),
        regions: Vec::new(),
    }
}

fn arb_range() -> impl Strategy<Value = (u64, Option<u64>)> {
    (0u64..100_000).prop_flat_map(|lower| {
        prop_oneof![
            Just((lower, None)),
            (0u64..100_000).prop_map(move |width| (lower, Some(lower + width))),
        ]
    })
}

fn arb_ads() -> impl Strategy<Value = Vec<AdRecord>> {
    proptest::collection::vec(
        (
            0usize..8,   // id pool, so duplicates happen
            0u32..1000,  // creation offset
            proptest::sample::subsequence(vec!["fr", "en", "de"], 0..=3),
            arb_range(),
        ),
        0..25,
    )
    .prop_map(|specs| {
        specs
            .into_iter()
            .map(|(id, offset, langs, range)| {
                ad(&format!("ad{id}"), offset, "corps du texte", &langs, range)
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn dedupe_is_idempotent(ads in arb_ads()) {
        let once = dedupe(ads);
        let twice = dedupe(once.clone());
        prop_assert_eq!(&once, &twice);
        let mut ids: Vec<&String> = once.iter().map(|a| &a.ad_id).collect();
        ids.dedup();
        prop_assert_eq!(ids.len(), once.len());
    }

    #[test]
    fn dedupe_keeps_earliest_per_id(ads in arb_ads()) {
        let deduped = dedupe(ads.clone());
        for kept in &deduped {
            for original in &ads {
                if original.ad_id == kept.ad_id {
                    prop_assert!(kept.creation_time <= original.creation_time);
                }
            }
        }
    }

    #[test]
    fn language_filter_is_a_subset_containing_the_language(ads in arb_ads()) {
        let kept = filter_language(ads.clone(), "fr");
        prop_assert!(kept.len() <= ads.len());
        for a in &kept {
            prop_assert!(a.languages.iter().any(|l| l == "fr"));
        }
        let direct: usize = ads
            .iter()
            .filter(|a| a.languages.iter().any(|l| l == "fr"))
            .count();
        prop_assert_eq!(kept.len(), direct);
    }

    #[test]
    fn midpoint_lies_within_bounds_and_is_monotone(
        lower in 0u64..1_000_000,
        width in 0u64..1_000_000,
        bump in 0u64..1_000,
    ) {
        let range = ValueRange::closed(lower, lower + width).unwrap();
        let m = midpoint(&range);
        prop_assert!(m.value >= lower as f64 && m.value <= (lower + width) as f64);
        prop_assert!(!m.open_ended);

        let wider = ValueRange::closed(lower, lower + width + bump).unwrap();
        prop_assert!(midpoint(&wider).value >= m.value);
        let shifted = ValueRange::closed(lower + bump, lower + width + bump).unwrap();
        prop_assert!(midpoint(&shifted).value >= m.value);

        let open = midpoint(&ValueRange::open_ended(lower));
        prop_assert!(open.open_ended);
        prop_assert_eq!(open.value, lower as f64);
    }

    #[test]
    fn corpus_totals_are_additive(ads in arb_ads(), cut in 0usize..25) {
        let cut = cut.min(ads.len());
        let (left, right) = ads.split_at(cut);
        let whole = corpus_totals(&ads);
        let a = corpus_totals(left);
        let b = corpus_totals(right);
        // midpoints are half-integers well inside f64's exact range, so
        // the sums are exact and concatenation distributes
        prop_assert_eq!(whole.impressions_estimate, a.impressions_estimate + b.impressions_estimate);
        prop_assert_eq!(whole.open_ended_impressions, a.open_ended_impressions + b.open_ended_impressions);
        for (currency, total) in &whole.spend_estimate {
            let left_total = a.spend_estimate.get(currency).copied().unwrap_or(0.0);
            let right_total = b.spend_estimate.get(currency).copied().unwrap_or(0.0);
            prop_assert_eq!(*total, left_total + right_total);
        }
    }
}

fn decorate(text: &str) -> String {
    text.chars()
        .map(|c| match c {
            'a' => 'à',
            'e' => 'é',
            'i' => 'î',
            'o' => 'ô',
            'u' => 'ù',
            'c' => 'ç',
            other => other.to_ascii_uppercase(),
        })
        .collect()
}

proptest! {
    #[test]
    fn candidate_match_survives_case_and_diacritics(
        words in proptest::collection::vec("[a-z]{2,8}", 1..8),
        alias in "[a-z]{3,8}",
    ) {
        let body = words.join(" ");
        let aliases = CandidateAliasSet::new("cand", vec![alias.clone()]).unwrap();
        let plain = ad("x", 0, &body, &["fr"], (0, Some(10)));
        let decorated = ad("x", 0, &decorate(&body), &["fr"], (0, Some(10)));
        prop_assert_eq!(
            match_candidate(&plain, &aliases),
            match_candidate(&decorated, &aliases)
        );
    }

    #[test]
    fn candidate_match_agrees_with_regex_oracle(
        words in proptest::collection::vec("[a-zéèçà]{1,8}", 1..8),
        alias in "[a-z]{3,8}",
        punct in proptest::sample::select(&[" ", ", ", "! ", " - ", "... "][..]),
    ) {
        let body = words.join(punct);
        let aliases = CandidateAliasSet::new("cand", vec![alias.clone()]).unwrap();
        let record = ad("x", 0, &body, &["fr"], (0, Some(10)));
        let folded_body = policyscope_core::ingest::fold_text(&body);
        let folded_alias = policyscope_core::ingest::fold_text(&alias);
        let oracle = regex::Regex::new(&format!(r"\b{}\b", regex::escape(&folded_alias)))
            .unwrap()
            .is_match(&folded_body);
        prop_assert_eq!(match_candidate(&record, &aliases), oracle);
    }
}

fn arb_bool_vec_pair() -> impl Strategy<Value = (Vec<bool>, Vec<bool>)> {
    (1usize..40).prop_flat_map(|n| {
        (
            proptest::collection::vec(any::<bool>(), n),
            proptest::collection::vec(any::<bool>(), n),
        )
    })
}

proptest! {
    #[test]
    fn kappa_symmetry_reflexivity_flip((a, b) in arb_bool_vec_pair()) {
        let ab = cohen_kappa(&a, &b).unwrap();
        let ba = cohen_kappa(&b, &a).unwrap();
        prop_assert_eq!(ab.as_f64(), ba.as_f64());
        if let Some(v) = ab.as_f64() {
            prop_assert!(v <= 1.0 + 1e-12);
        }
        prop_assert_eq!(cohen_kappa(&a, &a).unwrap().as_f64(), Some(1.0));

        let not_a: Vec<bool> = a.iter().map(|x| !x).collect();
        let not_b: Vec<bool> = b.iter().map(|x| !x).collect();
        let flipped = cohen_kappa(&not_a, &not_b).unwrap();
        match (ab, flipped) {
            (KappaOutcome::Value(x), KappaOutcome::Value(y)) => {
                prop_assert!((x - y).abs() < 1e-12)
            }
            (x, y) => prop_assert_eq!(x.as_f64(), y.as_f64()),
        }
    }

    #[test]
    fn kappa_is_one_only_for_identical_vectors((a, b) in arb_bool_vec_pair()) {
        if let Some(v) = cohen_kappa(&a, &b).unwrap().as_f64() {
            if (v - 1.0).abs() < 1e-12 {
                prop_assert_eq!(&a, &b);
            }
        }
    }
}

fn arb_assemblies() -> impl Strategy<Value = Vec<VoteAssembly>> {
    let subset = proptest::sample::subsequence(vec!["c1", "c2", "c3"], 1..=3);
    proptest::collection::vec([subset.clone(), subset.clone(), subset], 1..12).prop_map(|ads| {
        ads.into_iter()
            .enumerate()
            .map(|(i, votes)| VoteAssembly {
                ad_id: format!("ad{i}"),
                votes: votes.map(|cats| AnnotationVote {
                    worker_id: format!("w{i}"),
                    ad_id: format!("ad{i}"),
                    categories: cats.into_iter().map(str::to_string).collect(),
                    duration_seconds: 600,
                    submitted_at: Utc.with_ymd_and_hms(2022, 1, 1, 0, 0, 0).unwrap(),
                }),
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn soft_row_dominates_binary_row(assemblies in arb_assemblies()) {
        let vm = vm_aggregate(&assemblies);
        let soft = distrib_aggregate(&assemblies);
        prop_assert_eq!(soft.rows(), assemblies.len());
        for row in 0..soft.rows() {
            let ad_id = &soft.ad_ids()[row];
            for (j, category) in soft.category_ids().iter().enumerate() {
                let soft_value = soft.get(row, j);
                let binary_value = vm
                    .ad_index(ad_id)
                    .and_then(|r| vm.category_index(category).map(|c| vm.get(r, c)))
                    .unwrap_or(0.0);
                prop_assert_eq!(soft_value >= 0.6, binary_value == 1.0);
            }
        }
    }

    #[test]
    fn vm_labels_rederive_from_votes(assemblies in arb_assemblies()) {
        let vm = vm_aggregate(&assemblies);
        for assembly in &assemblies {
            match vm.ad_index(&assembly.ad_id) {
                Some(row) => {
                    for (j, category) in vm.category_ids().iter().enumerate() {
                        let votes = assembly
                            .votes
                            .iter()
                            .filter(|v| v.categories.contains(category))
                            .count();
                        prop_assert_eq!(vm.get(row, j) == 1.0, votes >= 2);
                    }
                    prop_assert!(vm.row(row).iter().any(|v| *v > 0.0));
                }
                None => {
                    // dropped ads truly have no 2-vote category
                    for category in ["c1", "c2", "c3"] {
                        let votes = assembly
                            .votes
                            .iter()
                            .filter(|v| v.categories.contains(category))
                            .count();
                        prop_assert!(votes < 2);
                    }
                }
            }
        }
    }
}

fn arb_binary_matrix() -> impl Strategy<Value = LabelMatrix> {
    (1usize..12, 1usize..5).prop_flat_map(|(rows, cols)| {
        proptest::collection::vec(any::<bool>(), rows * cols).prop_map(move |bits| {
            LabelMatrix::new(
                (0..rows).map(|i| format!("ad{i}")).collect(),
                (0..cols).map(|j| format!("c{j}")).collect(),
                bits.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect(),
                LabelMode::Binary,
            )
            .unwrap()
        })
    })
}

proptest! {
    #[test]
    fn split_is_deterministic_and_partitions(matrix in arb_binary_matrix(), seed in any::<u64>()) {
        let params = SplitParams {
            per_category: 2,
            min_support: 1,
            validation_fraction: 0.25,
        };
        let (a, _) = stratified_test_split(&matrix, &params, seed).unwrap();
        let (b, _) = stratified_test_split(&matrix, &params, seed).unwrap();
        prop_assert_eq!(&a, &b);

        let mut union: Vec<&String> = a.train.iter().chain(&a.validation).chain(&a.test).collect();
        union.sort();
        let mut expected: Vec<&String> = matrix.ad_ids().iter().collect();
        expected.sort();
        prop_assert_eq!(union, expected);

        let train: BTreeSet<&String> = a.train.iter().collect();
        let validation: BTreeSet<&String> = a.validation.iter().collect();
        let test: BTreeSet<&String> = a.test.iter().collect();
        prop_assert!(train.is_disjoint(&validation));
        prop_assert!(train.is_disjoint(&test));
        prop_assert!(validation.is_disjoint(&test));
    }

    #[test]
    fn grouping_and_subset_filter_idempotent(
        labels in proptest::sample::subsequence(
            vec!["macroeconomic-policy", "foreign-trade", "economic-regulations", "health", "environment", "economy", "transport"],
            1..=7,
        ),
        matrix in arb_binary_matrix(),
    ) {
        let codebook = Codebook::bundled_default();
        let set: BTreeSet<String> = labels.into_iter().map(str::to_string).collect();
        let once = apply_grouping(&set, &codebook).unwrap();
        let twice = apply_grouping(&once, &codebook).unwrap();
        prop_assert_eq!(once, twice);

        // matrix categories c0..c4 are foreign to the registry in name, so
        // rebuild against real ids before filtering
        let renamed = LabelMatrix::new(
            matrix.ad_ids().to_vec(),
            ["health", "energy", "transport", "economy"]
                .iter()
                .take(matrix.cols())
                .map(|s| s.to_string())
                .collect(),
            (0..matrix.rows()).flat_map(|r| matrix.row(r).to_vec()).collect(),
            LabelMode::Binary,
        )
        .unwrap();
        let once = subset_filter(&renamed, "cap9", &codebook).unwrap();
        let twice = subset_filter(&once, "cap9", &codebook).unwrap();
        prop_assert_eq!(once, twice);
    }
}

fn arb_matrix_pair() -> impl Strategy<Value = (LabelMatrix, LabelMatrix)> {
    (1usize..10, 1usize..5).prop_flat_map(|(rows, cols)| {
        (
            proptest::collection::vec(any::<bool>(), rows * cols),
            proptest::collection::vec(any::<bool>(), rows * cols),
        )
            .prop_map(move |(gold_bits, pred_bits)| {
                let build = |bits: Vec<bool>| {
                    LabelMatrix::new(
                        (0..rows).map(|i| format!("ad{i}")).collect(),
                        (0..cols).map(|j| format!("c{j}")).collect(),
                        bits.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect(),
                        LabelMode::Binary,
                    )
                    .unwrap()
                };
                (build(gold_bits), build(pred_bits))
            })
    })
}

fn permute_matrix(matrix: &LabelMatrix, row_order: &[usize], col_order: &[usize]) -> LabelMatrix {
    let mut entries = Vec::with_capacity(matrix.rows() * matrix.cols());
    for &r in row_order {
        for &c in col_order {
            entries.push(matrix.get(r, c));
        }
    }
    LabelMatrix::new(
        row_order.iter().map(|&r| matrix.ad_ids()[r].clone()).collect(),
        col_order
            .iter()
            .map(|&c| matrix.category_ids()[c].clone())
            .collect(),
        entries,
        matrix.mode(),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn micro_average_is_permutation_invariant(
        (gold, pred) in arb_matrix_pair(),
        seed in any::<u64>(),
    ) {
        let baseline = micro_average(&gold, &pred).unwrap();
        let mut rng = policyscope_core::SeededRng::new(seed);
        let mut row_order: Vec<usize> = (0..gold.rows()).collect();
        let mut col_order: Vec<usize> = (0..gold.cols()).collect();
        rng.shuffle(&mut row_order);
        rng.shuffle(&mut col_order);
        let permuted = micro_average(
            &permute_matrix(&gold, &row_order, &col_order),
            &permute_matrix(&pred, &row_order, &col_order),
        )
        .unwrap();
        prop_assert_eq!(baseline.precision, permuted.precision);
        prop_assert_eq!(baseline.recall, permuted.recall);
        prop_assert_eq!(baseline.f1, permuted.f1);
    }

    #[test]
    fn f1_lies_between_min_and_max_of_p_and_r((gold, pred) in arb_matrix_pair()) {
        for class in per_class_prf(&gold, &pred).unwrap() {
            if class.precision + class.recall == 0.0 {
                prop_assert_eq!(class.f1, 0.0);
            } else {
                let low = class.precision.min(class.recall);
                let high = class.precision.max(class.recall);
                prop_assert!(class.f1 >= low - 1e-12 && class.f1 <= high + 1e-12);
            }
        }
    }
}

proptest! {
    #[test]
    fn tfidf_vectors_have_unit_norm(
        corpus in proptest::collection::vec(
            proptest::collection::vec("[a-f]{1,3}", 1..8),
            1..10,
        ),
    ) {
        let vocab = fit_tfidf(&corpus, 1).unwrap();
        for doc in &corpus {
            let v = transform(doc, &vocab);
            let norm = v.l2_norm();
            if norm > 0.0 {
                prop_assert!((norm - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn augmentation_preserves_originals(
        rows in 1usize..10,
        fraction in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let ad_ids: Vec<String> = (0..rows).map(|i| format!("ad{i}")).collect();
        let matrix = LabelMatrix::new(
            ad_ids.clone(),
            vec!["c1".to_string()],
            vec![1.0; rows],
            LabelMode::Binary,
        )
        .unwrap();
        let texts: BTreeMap<String, String> = ad_ids
            .iter()
            .map(|id| (id.clone(), format!("deux mots {id}")))
            .collect();
        let plan = AugmentPlan {
            fraction,
            pivot_language: "en".to_string(),
            seed,
        };
        let out = augment_dataset(&matrix, &texts, &plan, &ReverseWordsParaphrase).unwrap();
        for (row, ad_id) in matrix.ad_ids().iter().enumerate() {
            let out_row = out.matrix.ad_index(ad_id).unwrap();
            prop_assert_eq!(out.matrix.row(out_row), matrix.row(row));
            prop_assert_eq!(&out.texts[ad_id], &texts[ad_id]);
        }
        for synthetic_row in 0..out.matrix.rows() {
            let id = &out.matrix.ad_ids()[synthetic_row];
            if let Some(original) = id.strip_suffix("#bt") {
                let original_row = matrix.ad_index(original).unwrap();
                prop_assert_eq!(out.matrix.row(synthetic_row), matrix.row(original_row));
            }
        }
    }

    #[test]
    fn prediction_grows_as_thresholds_shrink(
        weights in proptest::collection::vec(-2.0f64..2.0, 6),
        features in proptest::collection::vec(-2.0f64..2.0, 3),
        low in 0.0f64..1.0,
        bump in 0.0f64..0.5,
    ) {
        let head = LinearHead::new(
            weights,
            vec![0.0, 0.0],
            vec!["c0".to_string(), "c1".to_string()],
            3,
            FeatureSource::Embedding,
        )
        .unwrap();
        let x = FeatureVector::dense(features, FeatureSource::Embedding);
        let high = (low + bump).min(1.0);
        let loose = predict(&head, &x, &ThresholdVector::uniform(2, low).unwrap()).unwrap();
        let tight = predict(&head, &x, &ThresholdVector::uniform(2, high).unwrap()).unwrap();
        prop_assert!(tight.labels.is_subset(&loose.labels));
    }

    #[test]
    fn exposure_rows_always_sum_to_one(
        impressions in proptest::collection::vec(1u64..100_000, 1..8),
        female_shares in proptest::collection::vec(0.0f64..=1.0, 1..8),
    ) {
        let n = impressions.len().min(female_shares.len());
        let mut ads = Vec::new();
        let mut set = PredictionSet::new();
        for i in 0..n {
            let mut record = ad(&format!("ad{i}"), 0, "", &["fr"], (impressions[i], Some(impressions[i])));
            let female = (female_shares[i] * 100.0).round() / 100.0;
            record.demographics = vec![
                DemographicCell { gender: Gender::Female, age_bucket: "25-34".parse().unwrap(), share: female },
                DemographicCell { gender: Gender::Male, age_bucket: "45-54".parse().unwrap(), share: 1.0 - female },
            ];
            ads.push(record);
            set.insert(format!("ad{i}"), ["health".to_string()].into_iter().collect());
        }
        for axis in [ExposureAxis::Gender, ExposureAxis::Age] {
            let (table, _) = demographic_exposure(&ads, &set, axis);
            for row in &table.rows {
                let sum: f64 = row.shares.iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-6);
            }
        }
    }
}
