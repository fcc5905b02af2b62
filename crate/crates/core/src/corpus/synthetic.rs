//! Template-grammar corpus generator.
//!
//! Every pair is rendered from an intent (subject, attribute, qualifier and
//! optional location and extra). Titles and keywords use one canonical slot
//! order; queries use one of several paraphrase templates, some of which omit
//! the qualifier. A chosen share of the keyword set is taken from corpus
//! titles, the rest are intents no title ever renders to.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::RawPair;
use crate::{Error, Result};

const SUBJECTS: &[&str] = &[
    "shoes",
    "shirt",
    "jacket",
    "phone",
    "laptop",
    "tablet",
    "camera",
    "watch",
    "headphones",
    "speaker",
    "backpack",
    "wallet",
    "sofa",
    "chair",
    "table",
    "lamp",
    "mattress",
    "pillow",
    "blanket",
    "curtain",
    "bicycle",
    "helmet",
    "tent",
    "kettle",
    "blender",
    "toaster",
    "microwave",
    "vacuum",
    "printer",
    "monitor",
    "keyboard",
    "mouse",
    "router",
    "charger",
    "sunglasses",
    "perfume",
    "lipstick",
    "shampoo",
    "sneakers",
    "boots",
    "sandals",
    "dress",
    "skirt",
    "jeans",
    "hoodie",
    "sweater",
    "coat",
    "scarf",
    "gloves",
    "hat",
    "socks",
    "suitcase",
    "stroller",
    "crib",
    "toys",
    "puzzle",
    "guitar",
    "piano",
    "drone",
    "projector",
    "television",
    "fridge",
    "heater",
    "fan",
    "grill",
    "cookware",
    "knife",
    "mug",
    "bottle",
    "umbrella",
    "watchband",
    "earrings",
    "necklace",
    "bracelet",
    "ring",
    "handbag",
    "tie",
    "belt",
    "pajamas",
    "swimsuit",
];

const ATTRIBUTES: &[&str] = &[
    "red",
    "blue",
    "black",
    "white",
    "green",
    "pink",
    "grey",
    "brown",
    "purple",
    "yellow",
    "cheap",
    "luxury",
    "vintage",
    "modern",
    "classic",
    "portable",
    "wireless",
    "waterproof",
    "lightweight",
    "compact",
    "foldable",
    "durable",
    "soft",
    "warm",
    "cotton",
    "leather",
    "wooden",
    "metal",
    "plastic",
    "glass",
    "silk",
    "wool",
    "organic",
    "handmade",
    "smart",
    "electric",
    "digital",
    "mini",
    "large",
    "small",
    "slim",
    "ergonomic",
    "quiet",
    "fast",
    "cordless",
    "rechargeable",
    "adjustable",
    "reversible",
    "breathable",
    "stretchy",
    "padded",
    "insulated",
    "polarized",
    "rugged",
    "premium",
    "budget",
    "refurbished",
    "discounted",
    "stylish",
    "elegant",
    "casual",
    "formal",
    "sporty",
    "retro",
    "minimalist",
    "colorful",
    "striped",
    "floral",
    "matte",
    "glossy",
    "transparent",
    "magnetic",
    "ceramic",
    "bamboo",
    "velvet",
    "denim",
    "linen",
    "suede",
    "titanium",
    "carbon",
];

const QUALIFIERS: &[&str] = &[
    "men",
    "women",
    "kids",
    "boys",
    "girls",
    "baby",
    "toddler",
    "teens",
    "seniors",
    "students",
    "office",
    "home",
    "kitchen",
    "bedroom",
    "bathroom",
    "garden",
    "outdoor",
    "indoor",
    "travel",
    "camping",
    "hiking",
    "running",
    "cycling",
    "gym",
    "yoga",
    "swimming",
    "school",
    "work",
    "party",
    "wedding",
    "winter",
    "summer",
    "spring",
    "autumn",
    "beach",
    "gaming",
    "business",
    "gift",
    "pets",
    "dogs",
    "cats",
    "car",
    "camper",
    "boat",
    "nursery",
    "dorm",
    "apartment",
    "cabin",
    "festival",
    "holiday",
    "beginners",
    "professionals",
    "musicians",
    "artists",
    "nurses",
    "chefs",
    "gardeners",
    "fishing",
    "skiing",
    "climbing",
];

const LOCATIONS: &[&str] = &[
    "london",
    "paris",
    "berlin",
    "madrid",
    "rome",
    "vienna",
    "prague",
    "warsaw",
    "dublin",
    "lisbon",
    "amsterdam",
    "brussels",
    "zurich",
    "oslo",
    "stockholm",
    "helsinki",
    "copenhagen",
    "athens",
    "istanbul",
    "cairo",
    "dubai",
    "mumbai",
    "delhi",
    "bangkok",
    "singapore",
    "jakarta",
    "manila",
    "seoul",
    "tokyo",
    "osaka",
    "beijing",
    "shanghai",
    "shenzhen",
    "chengdu",
    "sydney",
    "melbourne",
    "auckland",
    "toronto",
    "montreal",
    "vancouver",
    "chicago",
    "boston",
    "seattle",
    "denver",
    "austin",
    "dallas",
    "houston",
    "miami",
    "atlanta",
    "phoenix",
    "portland",
    "detroit",
    "nashville",
    "orlando",
    "lima",
    "bogota",
    "santiago",
    "quito",
    "havana",
    "nairobi",
];

const EXTRAS: &[&str] = &[
    "sale",
    "deals",
    "discount",
    "clearance",
    "outlet",
    "wholesale",
    "rental",
    "repair",
    "warranty",
    "review",
    "reviews",
    "coupon",
    "bundle",
    "set",
    "kit",
    "pack",
    "pair",
    "collection",
    "edition",
    "series",
    "model",
    "brand",
    "shop",
    "store",
    "official",
    "delivery",
    "shipping",
    "returns",
    "promo",
    "offer",
    "bargain",
    "auction",
    "used",
    "new",
    "original",
    "genuine",
    "custom",
    "personalized",
    "replacement",
    "accessories",
];

/// Words that only appear in query templates.
const FUNCTION_WORDS: &[&str] = &[
    "buy", "for", "in", "best", "near", "price", "where", "to", "online", "top", "get", "find", "order", "looking",
];

/// Query paraphrase templates. `{slot}` renders a slot, `word:{slot}` renders
/// the word only when the optional slot is present, bare words are literal.
const TEMPLATES: &[&str] = &[
    "{attr} {subj} {qual} {loc} {extra}",
    "{subj} {attr} {qual} {loc} {extra}",
    "buy {attr} {subj} for:{qual} in:{loc} {extra}",
    "best {subj} {attr} {qual} {loc} {extra}",
    "{qual} {attr} {subj} near:{loc} {extra} price",
    "where to buy {subj} {attr} {qual} in:{loc} {extra}",
    "top {attr} {subj} {qual} {extra} {loc}",
    "find {subj} for:{qual} {attr} {loc} {extra} online",
];

/// Number of procedurally named brand products added to [`SUBJECTS`].
const BRAND_COUNT: usize = 150;
const QUERY_SEED_MASK: u64 = 0x5eed_0f9e_7ea1_e500;
const LOCATION_RATE: f64 = 0.5;
const EXTRA_RATE: f64 = 0.3;

/// Parameters of a synthetic corpus and keyword set.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub num_pairs: usize,
    pub keyword_count: usize,
    /// How many of the query templates are in use (1..=8).
    pub template_count: usize,
    /// Share of keywords that also occur as corpus titles.
    pub overlap_fraction: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            num_pairs: 12000,
            keyword_count: 10_000,
            template_count: TEMPLATES.len(),
            overlap_fraction: 0.3,
        }
    }
}

impl SyntheticSpec {
    pub fn max_templates() -> usize {
        TEMPLATES.len()
    }

    /// Number of keywords drawn from corpus titles.
    pub fn overlap_count(&self) -> usize {
        (self.overlap_fraction * self.keyword_count as f64).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if self.keyword_count == 0 {
            return Err(Error::NoData("keyword set must be non-empty"));
        }
        if !(0.0..=1.0).contains(&self.overlap_fraction) {
            return Err(Error::InvalidInput(format!(
                "overlap fraction {} outside [0, 1]",
                self.overlap_fraction
            )));
        }
        if self.template_count == 0 || self.template_count > TEMPLATES.len() {
            return Err(Error::InvalidInput(format!(
                "template count must be in 1..={}",
                TEMPLATES.len()
            )));
        }
        if self.overlap_count() > self.num_pairs {
            return Err(Error::InvalidInput(format!(
                "{} overlapping keywords need at least as many pairs (have {})",
                self.overlap_count(),
                self.num_pairs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub corpus: Vec<RawPair>,
    pub keywords: Vec<String>,
}

struct Lexicon {
    subjects: Vec<String>,
}

impl Lexicon {
    fn new() -> Self {
        let taken: HashSet<&str> = SUBJECTS
            .iter()
            .chain(ATTRIBUTES)
            .chain(QUALIFIERS)
            .chain(LOCATIONS)
            .chain(EXTRAS)
            .chain(FUNCTION_WORDS)
            .copied()
            .collect();
        const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
        const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
        let combos = ONSETS.len() * VOWELS.len() * ONSETS.len() * VOWELS.len();
        let mut subjects: Vec<String> = SUBJECTS.iter().map(|s| s.to_string()).collect();
        let mut brands = 0;
        // stride 31 is coprime to the combination count, so this visits
        // every combination once before repeating
        let mut index = 0usize;
        while brands < BRAND_COUNT {
            index = (index + 31) % combos;
            let (a, rest) = (index % 5, index / 5);
            let (b, rest) = (rest % 14, rest / 14);
            let (c, d) = (rest % 5, rest / 5);
            let name = format!("{}{}{}{}x", ONSETS[d], VOWELS[c], ONSETS[b], VOWELS[a]);
            if !taken.contains(name.as_str()) && !subjects.contains(&name) {
                subjects.push(name);
                brands += 1;
            }
        }
        Self { subjects }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Intent {
    subject: usize,
    attribute: usize,
    qualifier: usize,
    location: Option<usize>,
    extra: Option<usize>,
}

impl Intent {
    fn sample(rng: &mut ChaCha8Rng, lexicon: &Lexicon) -> Self {
        Self {
            subject: rng.random_range(0..lexicon.subjects.len()),
            attribute: rng.random_range(0..ATTRIBUTES.len()),
            qualifier: rng.random_range(0..QUALIFIERS.len()),
            location: rng
                .random_bool(LOCATION_RATE)
                .then(|| rng.random_range(0..LOCATIONS.len())),
            extra: rng.random_bool(EXTRA_RATE).then(|| rng.random_range(0..EXTRAS.len())),
        }
    }

    fn slot<'a>(&self, name: &str, lexicon: &'a Lexicon) -> Option<&'a str> {
        match name {
            "subj" => Some(lexicon.subjects[self.subject].as_str()),
            "attr" => Some(ATTRIBUTES[self.attribute]),
            "qual" => Some(QUALIFIERS[self.qualifier]),
            "loc" => self.location.map(|i| LOCATIONS[i]),
            "extra" => self.extra.map(|i| EXTRAS[i]),
            other => unreachable!("unknown template slot {other}"),
        }
    }

    fn render(&self, template: &str, lexicon: &Lexicon) -> String {
        let mut words: Vec<&str> = Vec::new();
        for item in template.split(' ') {
            match item.split_once('{') {
                None => words.push(item),
                Some((prefix, slot)) => {
                    if let Some(value) = self.slot(slot.trim_end_matches('}'), lexicon) {
                        if let Some(word) = prefix.strip_suffix(':') {
                            words.push(word);
                        }
                        words.push(value);
                    }
                }
            }
        }
        words.join(" ")
    }

    /// Title and keyword form.
    fn canonical(&self, lexicon: &Lexicon) -> String {
        self.render("{subj} {attr} {qual} {loc} {extra}", lexicon)
    }

    fn query(&self, rng: &mut ChaCha8Rng, template_count: usize, lexicon: &Lexicon) -> String {
        self.render(TEMPLATES[rng.random_range(0..template_count)], lexicon)
    }
}

/// Distinct intents whose titles become the overlapping keywords; each is
/// guaranteed at least one pair.
fn sample_anchors(spec: &SyntheticSpec, lexicon: &Lexicon, rng: &mut ChaCha8Rng) -> Vec<Intent> {
    let overlap = spec.overlap_count();
    let mut seen = HashSet::new();
    let mut anchors = Vec::with_capacity(overlap);
    while anchors.len() < overlap {
        let intent = Intent::sample(rng, lexicon);
        if seen.insert(intent.canonical(lexicon)) {
            anchors.push(intent);
        }
    }
    anchors
}

/// Generates a corpus and keyword set; identical specs give identical output.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let lexicon = Lexicon::new();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let anchors = sample_anchors(spec, &lexicon, &mut rng);

    let mut intents = anchors.clone();
    while intents.len() < spec.num_pairs {
        let intent = if !anchors.is_empty() && rng.random_bool(0.5) {
            anchors[rng.random_range(0..anchors.len())]
        } else {
            Intent::sample(&mut rng, &lexicon)
        };
        intents.push(intent);
    }
    intents.shuffle(&mut rng);

    let corpus: Vec<RawPair> = intents
        .iter()
        .map(|intent| {
            RawPair::new(
                intent.query(&mut rng, spec.template_count, &lexicon),
                intent.canonical(&lexicon),
            )
        })
        .collect();

    let titles: HashSet<&str> = corpus.iter().map(|p| p.target.as_str()).collect();
    let mut keywords: Vec<String> = anchors.iter().map(|i| i.canonical(&lexicon)).collect();
    let mut taken: HashSet<String> = keywords.iter().cloned().collect();
    while keywords.len() < spec.keyword_count {
        let candidate = Intent::sample(&mut rng, &lexicon).canonical(&lexicon);
        if !titles.contains(candidate.as_str()) && taken.insert(candidate.clone()) {
            keywords.push(candidate);
        }
    }
    keywords.shuffle(&mut rng);

    Ok(SyntheticData { corpus, keywords })
}

/// Queries in the corpus's template language, e.g. for benchmarks and
/// traffic logs. Half of them (on average) express an intent whose canonical
/// form is in the keyword set; the rest are fresh intents. Deterministic in
/// `(spec, count)`.
pub fn synthetic_queries(spec: &SyntheticSpec, count: usize) -> Result<Vec<String>> {
    spec.validate()?;
    let lexicon = Lexicon::new();
    let anchors = sample_anchors(spec, &lexicon, &mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ QUERY_SEED_MASK);
    Ok((0..count)
        .map(|_| {
            let intent = if !anchors.is_empty() && rng.random_bool(0.5) {
                anchors[rng.random_range(0..anchors.len())]
            } else {
                Intent::sample(&mut rng, &lexicon)
            };
            intent.query(&mut rng, spec.template_count, &lexicon)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    fn spec(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            seed,
            num_pairs: 300,
            keyword_count: 200,
            template_count: 8,
            overlap_fraction: 0.4,
        }
    }

    #[test]
    fn lexicon_words_are_distinct_single_tokens() {
        let lexicon = Lexicon::new();
        let all: Vec<&str> = lexicon
            .subjects
            .iter()
            .map(String::as_str)
            .chain(ATTRIBUTES.iter().copied())
            .chain(QUALIFIERS.iter().copied())
            .chain(LOCATIONS.iter().copied())
            .chain(EXTRAS.iter().copied())
            .chain(FUNCTION_WORDS.iter().copied())
            .collect();
        let unique: HashSet<&str> = all.iter().copied().collect();
        assert_eq!(unique.len(), all.len());
        assert!(all.iter().all(|w| tokenize(w) == vec![w.to_string()]));
        // room for every word plus the reserved ids in a 512-entry vocabulary
        assert!(all.len() + 3 <= 512, "{}", all.len());
    }

    #[test]
    fn same_seed_same_output() {
        assert_eq!(
            generate_synthetic(&spec(7)).unwrap(),
            generate_synthetic(&spec(7)).unwrap()
        );
        assert_ne!(
            generate_synthetic(&spec(7)).unwrap(),
            generate_synthetic(&spec(8)).unwrap()
        );
        assert_ne!(
            generate_synthetic(&spec(8)).unwrap(),
            generate_synthetic(&spec(9)).unwrap()
        );
    }

    #[test]
    fn overlap_zero_has_no_title_keywords() {
        let data = generate_synthetic(&SyntheticSpec {
            overlap_fraction: 0.0,
            ..spec(3)
        })
        .unwrap();
        let titles: HashSet<&str> = data.corpus.iter().map(|p| p.target.as_str()).collect();
        assert!(data.keywords.iter().all(|k| !titles.contains(k.as_str())));
        assert_eq!(data.keywords.len(), 200);
    }

    #[test]
    fn overlap_one_puts_every_keyword_among_titles() {
        let data = generate_synthetic(&SyntheticSpec {
            keyword_count: 50,
            overlap_fraction: 1.0,
            ..spec(11)
        })
        .unwrap();
        let titles: HashSet<&str> = data.corpus.iter().map(|p| p.target.as_str()).collect();
        assert_eq!(data.keywords.len(), 50);
        assert!(data.keywords.iter().all(|k| titles.contains(k.as_str())));
    }

    #[test]
    fn exact_overlap_count_and_distinct_keywords() {
        let s = spec(5);
        let data = generate_synthetic(&s).unwrap();
        let titles: HashSet<&str> = data.corpus.iter().map(|p| p.target.as_str()).collect();
        let in_titles = data.keywords.iter().filter(|k| titles.contains(k.as_str())).count();
        assert_eq!(in_titles, s.overlap_count());
        let distinct: HashSet<&String> = data.keywords.iter().collect();
        assert_eq!(distinct.len(), data.keywords.len());
        assert_eq!(data.corpus.len(), 300);
        assert!(data.corpus.iter().all(|p| !p.source.is_empty() && !p.target.is_empty()));
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(matches!(
            generate_synthetic(&SyntheticSpec {
                keyword_count: 0,
                ..spec(1)
            }),
            Err(Error::NoData(_))
        ));
        assert!(generate_synthetic(&SyntheticSpec {
            overlap_fraction: 1.5,
            ..spec(1)
        })
        .is_err());
        assert!(generate_synthetic(&SyntheticSpec {
            template_count: 0,
            ..spec(1)
        })
        .is_err());
        assert!(generate_synthetic(&SyntheticSpec {
            num_pairs: 10,
            overlap_fraction: 1.0,
            ..spec(1)
        })
        .is_err());
    }

    #[test]
    fn single_template_queries_follow_it() {
        let data = generate_synthetic(&SyntheticSpec {
            template_count: 1,
            ..spec(2)
        })
        .unwrap();
        // template 0 carries every slot, in the canonical set of words
        for pair in &data.corpus {
            let mut q = tokenize(&pair.source);
            let mut t = tokenize(&pair.target);
            q.sort();
            t.sort();
            assert_eq!(q, t);
        }
    }

    #[test]
    fn synthetic_queries_are_deterministic() {
        let a = synthetic_queries(&spec(4), 20).unwrap();
        assert_eq!(a, synthetic_queries(&spec(4), 20).unwrap());
        assert_eq!(a.len(), 20);
        assert!(a.iter().all(|q| !q.is_empty()));
    }

    #[test]
    fn about_half_the_queries_target_keywords() {
        // with a single template the query words are a permutation of the keyword
        let s = SyntheticSpec {
            template_count: 1,
            ..spec(5)
        };
        let data = generate_synthetic(&s).unwrap();
        let keywords: HashSet<Vec<String>> = data
            .keywords
            .iter()
            .map(|k| {
                let mut t = tokenize(k);
                t.sort();
                t
            })
            .collect();
        let queries = synthetic_queries(&s, 400).unwrap();
        let hits = queries
            .iter()
            .filter(|q| {
                let mut t = tokenize(q);
                t.sort();
                keywords.contains(&t)
            })
            .count();
        assert!((150..=250).contains(&hits), "{hits}");
    }
}
