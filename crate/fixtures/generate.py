#!/usr/bin/env python3
"""Regenerates the bundled fixtures and the manifest of expected values.

The manifest numbers are computed here, independently of the Rust
implementation, by applying the documented rules directly (duration
filter, per-worker dedupe, first-three selection, grouping, majority
vote, midpoint arithmetic, exposure accumulation). Tests compare the
toolkit's output against these frozen values.

Run from the repository root:  python3 fixtures/generate.py
"""

import json
import math
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent

ECONOMY_MEMBERS = {"macroeconomic-policy", "economic-regulations", "foreign-trade"}

KEYWORDS = {
    "environment": ["climat", "écologie", "biodiversité", "planète", "pollution"],
    "energy": ["énergie", "nucléaire", "électricité", "renouvelable", "carburant"],
    "international-affairs": ["ukraine", "europe", "guerre", "diplomatie", "alliés"],
    "health": ["santé", "hôpital", "soins", "vaccin", "médecins"],
    "human-rights": ["droits", "libertés", "égalité", "discriminations", "citoyens"],
    "government-operations": ["élection", "vote", "république", "gouvernement", "scrutin"],
    "social-policy": ["retraite", "pauvreté", "solidarité", "allocations", "familles"],
    "cultural-policy": ["culture", "musée", "cinéma", "patrimoine", "théâtre"],
    "macroeconomic-policy": ["impôts", "budget", "inflation", "croissance", "dette"],
    "economic-regulations": ["banques", "concurrence", "consommateurs", "commerce", "marchés"],
    "foreign-trade": ["exportations", "douanes", "importations", "échanges", "tarifs"],
    "education": ["école", "université", "enseignants", "étudiants", "apprentissage"],
    "justice-and-criminality": ["police", "justice", "sécurité", "délinquance", "tribunaux"],
    "work-and-employment": ["emploi", "salaires", "travail", "chômage", "syndicats"],
    "urban-and-territorial-policies": ["logement", "quartiers", "territoires", "urbanisme", "ruralité"],
    "immigration": ["immigration", "réfugiés", "asile", "frontières", "accueil"],
    "other": ["bonjour", "merci", "rejoignez", "notre", "communauté"],
    "transport": ["trains", "routes", "vélo", "transports", "mobilité"],
    "agriculture": ["agriculteurs", "fermes", "récoltes", "élevage", "terroir"],
    "defense": ["armée", "défense", "soldats", "militaire", "dissuasion"],
    "religion": ["laïcité", "cultes", "religion", "croyances", "églises"],
    "sports": ["sport", "stades", "athlètes", "olympiques", "clubs"],
    "technology-and-communication": ["numérique", "internet", "réseaux", "données", "innovation"],
}

IMPRESSION_BUCKETS = [
    (0, 999), (1000, 4999), (5000, 9999), (10000, 49999),
    (50000, 99999), (100000, 499999),
]
SPEND_BUCKETS = [(0, 99), (100, 499), (500, 999), (1000, 4999)]

GENDERS = ["female", "male", "unknown"]
AGES = ["13-17", "18-24", "25-34", "35-44", "45-54", "55-64", "65+"]
REGIONS = [
    "Auvergne-Rhône-Alpes", "Bourgogne-Franche-Comté", "Bretagne",
    "Centre-Val de Loire", "Corse", "Grand Est", "Hauts-de-France",
    "Île-de-France", "Normandie", "Nouvelle-Aquitaine", "Occitanie",
    "Pays de la Loire", "Provence-Alpes-Côte d'Azur",
]

# (primary category of the ad's votes, optional second agreed category)
# The first 48 rows reach agreement with exactly three plain votes; the
# economy rows vote for fine-grained member categories.
PLAIN_AGREED = (
    [("environment", None)] * 3 + [("environment", "energy")] * 2
    + [("international-affairs", None)] * 3 + [("international-affairs", "macroeconomic-policy")]
    + [("energy", None)] * 4
    + [("human-rights", None)] * 3 + [("government-operations", "human-rights")]
    + [("government-operations", None)] * 3
    + [("health", None)] * 3 + [("health", "social-policy")] * 2
    + [("social-policy", None)] * 3
    + [("cultural-policy", None)] * 3 + [("cultural-policy", "education")]
    + [("macroeconomic-policy", None)] * 2 + [("economic-regulations", None)]
    + [("GROUPED-ECONOMY", None)]  # agreement appears only after grouping
    + [("education", None)] * 3
    + [("justice-and-criminality", None)] * 2 + [("justice-and-criminality", "immigration")]
    + [("work-and-employment", None)] * 2
    + [("urban-and-territorial-policies", None)] * 2
    + [("immigration", None)]
    + [("other", None)]
)
assert len(PLAIN_AGREED) == 48, len(PLAIN_AGREED)

# ads with more than three votes; the first three agree on the category
EXTRA_VOTE_ADS = [
    ("health", 5),       # five votes
    ("environment", 4),  # four votes
    ("energy", "dup"),   # four votes, one worker voting twice
    ("education", 5),    # five votes
]
NO_AGREEMENT = [
    ["transport", "agriculture", "defense"],
    ["religion", "sports", "technology-and-communication"],
    ["health", "energy", "environment"],
]
SHORT_VOTE = ["health", "environment", "government-operations"]

CANDIDATE_PHRASES = {
    "macron": "Emmanuel Macron s'adresse aux Français",
    "le-pen": "Marine Le Pen présente son programme",
    "melenchon": "Jean-Luc Mélenchon appelle au rassemblement",
}


def group(category):
    return "economy" if category in ECONOMY_MEMBERS else category


def body_for(index, category, candidate):
    words = KEYWORDS[category]
    phrase = (
        f"{words[index % 5].capitalize()} et {words[(index + 1) % 5]} : "
        f"notre plan pour {words[(index + 2) % 5]} en France."
    )
    if candidate:
        phrase += f" {CANDIDATE_PHRASES[candidate]}."
    return phrase


def make_ads(rng):
    """58 unique ads + 2 duplicate records -> 60 lines."""
    roster = []  # (ad_id, primary_fine_category, candidate or None)
    primaries = []
    for primary, _secondary in PLAIN_AGREED:
        primaries.append("macroeconomic-policy" if primary == "GROUPED-ECONOMY" else primary)
    for cat, _style in EXTRA_VOTE_ADS:
        primaries.append(cat)
    for cats in NO_AGREEMENT:
        primaries.append(cats[0])
    for cat in SHORT_VOTE:
        primaries.append(cat)
    assert len(primaries) == 58

    candidates = {}
    for i in range(10):
        candidates[i] = "macron"
    for i in range(10, 16):
        candidates[i] = "le-pen"
    for i in range(16, 20):
        candidates[i] = "melenchon"

    ads = []
    for i, primary in enumerate(primaries):
        ad_id = f"ad{i + 1:02d}"
        candidate = candidates.get(i)
        roster.append((ad_id, primary, candidate))
        impressions = IMPRESSION_BUCKETS[rng.randrange(len(IMPRESSION_BUCKETS))]
        open_ended = i in (7, 31)  # two open-ended top buckets
        spend = SPEND_BUCKETS[rng.randrange(len(SPEND_BUCKETS))]
        female = rng.randrange(20, 80) / 100
        age_a, age_b = rng.sample(AGES, 2)
        region_a, region_b = rng.sample(REGIONS, 2)
        region_split = rng.randrange(30, 70) / 100
        day = 1 + (i * 3) % 150
        creation = f"2022-{1 + day // 28:02d}-{1 + day % 28:02d}T{8 + i % 10:02d}:00:00+00:00"
        ad = {
            "id": ad_id,
            "page_id": f"page{1 + i % 9}",
            "page_name": f"Page politique {1 + i % 9}",
            "ad_creation_time": creation,
            "ad_creative_body": body_for(i, primary, candidate),
            "bylines": f"Parti {1 + i % 5}",
            "languages": ["fr", "en"] if i % 17 == 0 else ["fr"],
            "impressions": (
                {"lower_bound": "1000000"}
                if open_ended
                else {"lower_bound": str(impressions[0]), "upper_bound": str(impressions[1])}
            ),
            "spend": {"lower_bound": str(spend[0]), "upper_bound": str(spend[1])},
            "currency": "USD" if i == 40 else "EUR",
            "demographic_distribution": [
                {"gender": "female", "age": age_a, "percentage": str(round(female * 0.6, 4))},
                {"gender": "male", "age": age_a, "percentage": str(round((1 - female) * 0.6, 4))},
                {"gender": "female", "age": age_b, "percentage": str(round(female * 0.35, 4))},
                {"gender": "male", "age": age_b, "percentage": str(round((1 - female) * 0.35, 4))},
                {"gender": "unknown", "age": age_b, "percentage": "0.05"},
            ],
            "region_distribution": [
                {"region": region_a, "percentage": str(round(region_split, 4))},
                {"region": region_b, "percentage": str(round(1 - region_split, 4))},
            ],
        }
        ads.append(ad)

    # two later re-fetches of existing ads (same content, later timestamp)
    duplicates = []
    for src in (ads[0], ads[1]):
        copy = json.loads(json.dumps(src))
        copy["ad_creation_time"] = "2022-06-14T09:00:00+00:00"
        duplicates.append(copy)
    lines = ads + duplicates
    return lines, ads, roster


def expected_totals(unique_ads):
    impressions = 0.0
    open_imp = 0
    spend = {}
    open_spend = 0
    for ad in unique_ads:
        imp = ad["impressions"]
        if "upper_bound" in imp:
            impressions += (int(imp["lower_bound"]) + int(imp["upper_bound"])) / 2
        else:
            impressions += int(imp["lower_bound"])
            open_imp += 1
        sp = ad["spend"]
        cur = ad["currency"]
        if "upper_bound" in sp:
            spend[cur] = spend.get(cur, 0.0) + (int(sp["lower_bound"]) + int(sp["upper_bound"])) / 2
        else:
            spend[cur] = spend.get(cur, 0.0) + int(sp["lower_bound"])
            open_spend += 1
    return impressions, open_imp, spend, open_spend


def make_votes(roster):
    """180 votes over the 58 ads, per the agreement layout."""
    votes = []  # (ad_id, worker_id, categories, duration, submitted_at)
    minute = 0

    def stamp():
        nonlocal minute
        minute += 1
        return f"2022-03-10T{9 + minute // 60:02d}:{minute % 60:02d}:00+00:00"

    worker = 0

    def next_workers(n):
        nonlocal worker
        out = [f"w{(worker + k) % 30 + 1:02d}" for k in range(n)]
        worker += n
        return out

    idx = 0
    for primary, secondary in PLAIN_AGREED:
        ad_id = roster[idx][0]
        idx += 1
        w = next_workers(3)
        if primary == "GROUPED-ECONOMY":
            cats = [["macroeconomic-policy"], ["foreign-trade"], ["other"]]
        elif secondary:
            cats = [[primary, secondary], [primary, secondary], [primary]]
        else:
            filler = "other" if primary != "other" else "transport"
            cats = [[primary], [primary], [primary, filler]]
        for k in range(3):
            duration = 240 if (idx == 1 and k == 0) else 400 + (idx * 7 + k * 13) % 900
            votes.append((ad_id, w[k], cats[k], duration, stamp()))

    for cat, style in EXTRA_VOTE_ADS:
        ad_id = roster[idx][0]
        idx += 1
        if style == "dup":
            w = next_workers(3)
            votes.append((ad_id, w[0], [cat], 600, stamp()))
            votes.append((ad_id, w[1], [cat], 610, stamp()))
            votes.append((ad_id, w[2], ["other"], 620, stamp()))
            votes.append((ad_id, w[0], ["transport"], 630, stamp()))  # ignored
        else:
            count = style
            w = next_workers(count)
            for k in range(count):
                chosen = [cat] if k < 2 else (["agriculture"] if k >= 3 else [cat, "other"])
                votes.append((ad_id, w[k], chosen, 500 + 10 * k, stamp()))

    for cats in NO_AGREEMENT:
        ad_id = roster[idx][0]
        idx += 1
        w = next_workers(3)
        for k in range(3):
            votes.append((ad_id, w[k], [cats[k]], 550 + k, stamp()))

    for cat in SHORT_VOTE:
        ad_id = roster[idx][0]
        idx += 1
        w = next_workers(3)
        votes.append((ad_id, w[0], [cat], 600, stamp()))
        votes.append((ad_id, w[1], [cat], 620, stamp()))
        votes.append((ad_id, w[2], [cat], 239, stamp()))  # under four minutes

    assert idx == 58
    assert len(votes) == 180, len(votes)
    return votes


def simulate_aggregation(votes, min_duration=240, apply_grouping=True):
    """Direct application of the documented rules."""
    kept = [v for v in votes if v[3] >= min_duration]
    by_ad = {}
    for ad_id, worker, cats, duration, ts in kept:
        by_ad.setdefault(ad_id, []).append((ts, worker, cats))
    assemblies = {}
    for ad_id, items in by_ad.items():
        items.sort()
        seen, picked = set(), []
        for ts, worker, cats in items:
            if worker in seen:
                continue
            seen.add(worker)
            picked.append(cats)
            if len(picked) == 3:
                break
        if len(picked) == 3:
            if apply_grouping:
                picked = [sorted({group(c) for c in cats}) for cats in picked]
            assemblies[ad_id] = picked
    vm_rows = {}
    for ad_id, triple in sorted(assemblies.items()):
        counts = {}
        for cats in triple:
            for c in cats:
                counts[c] = counts.get(c, 0) + 1
        agreed = sorted(c for c, n in counts.items() if n >= 2)
        if agreed:
            vm_rows[ad_id] = agreed
    return assemblies, vm_rows


def write_embeddings(roster, rng):
    categories = sorted({group(primary) for _, primary, _ in roster})
    lines = []
    for ad_id, primary, _ in roster:
        cat_idx = categories.index(group(primary))
        values = []
        for d in range(16):
            signal = 1.0 if d == cat_idx % 14 else 0.0
            noise = (rng.random() - 0.5) * 0.2
            values.append(round(signal + noise, 6))
        lines.append(ad_id + "\t" + "\t".join(repr(v) for v in values))
    return "\n".join(lines) + "\n"


def make_exposure_fixture():
    """Five hand-sized ads with spreadsheet-checkable tables."""
    ads = [
        {
            "id": "e1", "imp": (1000, 1000), "labels": ["health"],
            "demo": [("female", "18-24", 0.5), ("male", "18-24", 0.5)],
            "regions": [("Bretagne", 1.0)],
            "body": "Un plan santé complet. Emmanuel Macron s'engage.",
            "mentions": ["macron"],
        },
        {
            "id": "e2", "imp": (2000, 4000), "labels": ["health", "economy"],
            "demo": [("female", "25-34", 0.4), ("male", "35-44", 0.4), ("unknown", "45-54", 0.2)],
            "regions": [("Île-de-France", 0.7), ("Corse", 0.3)],
            "body": "Budget, impôts et santé. Marine Le Pen répond.",
            "mentions": ["le-pen"],
        },
        {
            "id": "e3", "imp": (500, 1500), "labels": ["economy"],
            "demo": [("female", "65+", 1.0)],
            "regions": [("Occitanie", 1.0)],
            "body": "La dette publique expliquée par Emmanuel Macron.",
            "mentions": ["macron"],
        },
        {
            "id": "e4", "imp": (0, 4000), "labels": ["environment"],
            "demo": [("male", "18-24", 0.25), ("female", "55-64", 0.75)],
            "regions": [("Bretagne", 0.5), ("Grand Est", 0.5)],
            "body": "Climat : Jean-Luc Mélenchon appelle au sursaut.",
            "mentions": ["melenchon"],
        },
        {
            "id": "e5", "imp": (1000, 1000), "labels": [],
            "demo": [("female", "25-34", 1.0)],
            "regions": [("Corse", 1.0)],
            "body": "Emmanuel Macron remercie ses soutiens.",
            "mentions": ["macron"],
        },
    ]

    def mid(imp):
        return (imp[0] + imp[1]) / 2

    gender_buckets = ["female", "male"]
    age_buckets = AGES
    region_buckets = REGIONS

    def bucket_mass(ad, axis):
        m = mid(ad["imp"])
        if axis == "gender":
            out = [0.0, 0.0]
            for g, _a, s in ad["demo"]:
                if g == "female":
                    out[0] += m * s
                elif g == "male":
                    out[1] += m * s
            return out
        if axis == "age":
            out = [0.0] * len(age_buckets)
            for _g, a, s in ad["demo"]:
                out[age_buckets.index(a)] += m * s
            return out
        out = [0.0] * len(region_buckets)
        for r, s in ad["regions"]:
            out[region_buckets.index(r)] += m * s
        return out

    expected = {"rho": 0.2}
    for axis, buckets in (("gender", gender_buckets), ("age", age_buckets), ("region", region_buckets)):
        rows = {}
        base = [0.0] * len(buckets)
        for ad in sorted(ads, key=lambda a: a["id"]):
            if not ad["labels"]:
                continue
            mass = bucket_mass(ad, axis)
            for i, v in enumerate(mass):
                base[i] += v
            for label in ad["labels"]:
                row = rows.setdefault(label, [0.0] * len(buckets))
                for i, v in enumerate(mass):
                    row[i] += v
        base_total = sum(base)
        expected[axis] = {
            "buckets": buckets,
            "baseline": [v / base_total for v in base],
            "rows": {
                label: [v / sum(row) for v in row]
                for label, row in sorted(rows.items())
            },
        }

    cand_categories = sorted({l for ad in ads if ad["labels"] for l in ad["labels"]})
    columns = {}
    for cand in ("le-pen", "macron", "melenchon"):
        cells = [0.0] * len(cand_categories)
        for ad in ads:
            if cand in ad["mentions"] and ad["labels"]:
                for label in ad["labels"]:
                    cells[cand_categories.index(label)] += mid(ad["imp"])
        total = sum(cells)
        if total > 0:
            columns[cand] = [c / total for c in cells]
    expected["candidates"] = {"categories": cand_categories, "columns": columns}

    records = []
    for ad in ads:
        records.append({
            "id": ad["id"],
            "page_id": "pe",
            "page_name": "Page exposure",
            "ad_creation_time": "2022-04-01T10:00:00+00:00",
            "ad_creative_body": ad["body"],
            "languages": ["fr"],
            "impressions": {"lower_bound": str(ad["imp"][0]), "upper_bound": str(ad["imp"][1])},
            "spend": {"lower_bound": "0", "upper_bound": "99"},
            "currency": "EUR",
            "demographic_distribution": [
                {"gender": g, "age": a, "percentage": repr(s)} for g, a, s in ad["demo"]
            ],
            "region_distribution": [
                {"region": r, "percentage": repr(s)} for r, s in ad["regions"]
            ],
        })
    predictions = [(ad["id"], "|".join(ad["labels"])) for ad in ads]
    return records, predictions, expected


def main():
    rng = random.Random(20220410)

    lines, unique_ads, roster = make_ads(rng)
    with open(HERE / "ads.ndjson", "w", encoding="utf-8") as f:
        for ad in lines:
            f.write(json.dumps(ad, ensure_ascii=False, separators=(",", ":")) + "\n")

    impressions, open_imp, spend, open_spend = expected_totals(unique_ads)

    votes = make_votes(roster)
    with open(HERE / "annotations.csv", "w", encoding="utf-8") as f:
        f.write("ad_id,worker_id,categories,duration_seconds,submitted_at\n")
        for ad_id, worker, cats, duration, ts in votes:
            f.write(f"{ad_id},{worker},{'|'.join(cats)},{duration},{ts}\n")

    assemblies, vm_rows = simulate_aggregation(votes)
    supports = {}
    for labels in vm_rows.values():
        for label in labels:
            supports[label] = supports.get(label, 0) + 1

    # sanity targets baked into the layout
    assert len(assemblies) == 55, len(assemblies)
    assert len(vm_rows) == 52, len(vm_rows)

    with open(HERE / "daily_report.csv", "w", encoding="utf-8") as f:
        f.write("page_id,page_name,ads_count,spend_lower,spend_upper\n")
        for i in range(1, 10):
            f.write(f"page{i},Page politique {i},{5 + i},{i * 100},{i * 100 + 499}\n")

    with open(HERE / "embeddings.tsv", "w", encoding="utf-8") as f:
        f.write(write_embeddings(roster, rng))

    with open(HERE / "aliases.json", "w", encoding="utf-8") as f:
        json.dump(
            {
                "macron": ["Emmanuel Macron", "Macron"],
                "le-pen": ["Marine Le Pen", "Le Pen"],
                "melenchon": ["Jean-Luc Mélenchon", "Mélenchon", "Melenchon"],
            },
            f, ensure_ascii=False, indent=2,
        )
        f.write("\n")

    # gold labels: the first 24 agreed ads, with four disagreements
    gold_rows = sorted(vm_rows.items())[:24]
    gold_categories = sorted({l for _, labels in gold_rows for l in labels})
    with open(HERE / "gold_labels.csv", "w", encoding="utf-8") as f:
        f.write("ad_id," + ",".join(gold_categories) + "\n")
        for i, (ad_id, labels) in enumerate(gold_rows):
            labels = set(labels)
            if i in (2, 9):
                labels = {gold_categories[0]} | labels  # extra expert label
            if i in (5, 14) and len(labels) > 1:
                labels = set(sorted(labels)[1:])  # expert drops one
            f.write(ad_id + "," + ",".join("1" if c in labels else "0" for c in gold_categories) + "\n")

    # ten single-label ads for the augmentation contract
    augment_ids = [f"bt{i:02d}" for i in range(10)]
    with open(HERE / "augment_matrix.csv", "w", encoding="utf-8") as f:
        f.write("ad_id,health\n")
        for ad_id in augment_ids:
            f.write(f"{ad_id},1\n")
    with open(HERE / "augment_texts.ndjson", "w", encoding="utf-8") as f:
        for i, ad_id in enumerate(augment_ids):
            text = f"la santé d'abord message numéro {i}"
            f.write(json.dumps({"id": ad_id, "text": text}, ensure_ascii=False) + "\n")

    exposure_records, exposure_predictions, exposure_expected = make_exposure_fixture()
    with open(HERE / "exposure_ads.ndjson", "w", encoding="utf-8") as f:
        for rec in exposure_records:
            f.write(json.dumps(rec, ensure_ascii=False, separators=(",", ":")) + "\n")
    with open(HERE / "exposure_predictions.csv", "w", encoding="utf-8") as f:
        f.write("ad_id,labels\n")
        for ad_id, labels in exposure_predictions:
            f.write(f"{ad_id},{labels}\n")
    with open(HERE / "exposure_expected.json", "w", encoding="utf-8") as f:
        json.dump(exposure_expected, f, ensure_ascii=False, indent=2)
        f.write("\n")

    manifest = {
        "ads": {
            "lines": len(lines),
            "unique_after_dedupe": len(unique_ads),
            "kept_by_language_filter": len(lines),
            "impressions_estimate": impressions,
            "open_ended_impressions": open_imp,
            "spend_estimate": dict(sorted(spend.items())),
            "open_ended_spend": open_spend,
        },
        "votes": {
            "lines": len(votes),
            "assemblies": len(assemblies),
            "vm_rows": len(vm_rows),
            "distrib_rows": len(assemblies),
            "vm_supports": dict(sorted(supports.items())),
        },
        "augment10": {
            "fraction": 0.5,
            "rows": 10,
            "synthetic_rows": 5,
            "total_rows": 15,
        },
    }
    with open(HERE / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, ensure_ascii=False, indent=2)
        f.write("\n")

    print("fixtures written to", HERE)
    print("vm rows:", len(vm_rows), "assemblies:", len(assemblies))
    print("supports:", dict(sorted(supports.items())))


if __name__ == "__main__":
    main()
