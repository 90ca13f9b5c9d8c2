//! Rule-based lowercase + singular normalization.

const IRREGULAR: &[(&str, &str)] = &[
    ("people", "person"),
    ("men", "man"),
    ("women", "woman"),
    ("children", "child"),
    ("feet", "foot"),
    ("teeth", "tooth"),
    ("geese", "goose"),
    ("mice", "mouse"),
    ("oxen", "ox"),
    ("knives", "knife"),
    ("wives", "wife"),
    ("lives", "life"),
    ("leaves", "leaf"),
    ("loaves", "loaf"),
    ("shelves", "shelf"),
    ("wolves", "wolf"),
    ("calves", "calf"),
    ("halves", "half"),
    ("scarves", "scarf"),
    ("thieves", "thief"),
    ("buses", "bus"),
    ("gases", "gas"),
    ("lenses", "lens"),
    ("canvases", "canvas"),
    ("atlases", "atlas"),
    ("irises", "iris"),
    ("cactuses", "cactus"),
    ("cacti", "cactus"),
    ("octopuses", "octopus"),
    ("walruses", "walrus"),
    ("circuses", "circus"),
    ("campuses", "campus"),
    ("viruses", "virus"),
    ("quizzes", "quiz"),
    ("movies", "movie"),
    ("cookies", "cookie"),
    ("pies", "pie"),
    ("ties", "tie"),
    ("zombies", "zombie"),
    ("calories", "calorie"),
    ("brownies", "brownie"),
    ("selfies", "selfie"),
    ("hippies", "hippie"),
    ("rookies", "rookie"),
    ("magpies", "magpie"),
    ("lorries", "lorry"),
    ("axes", "axe"),
    ("dice", "die"),
];

/// Words ending in `s` that are not plurals, or whose plural is the same word.
const INVARIANT: &[&str] = &[
    "bus", "gas", "lens", "canvas", "atlas", "iris", "glass", "grass", "class", "boss", "dress",
    "cross", "moss", "chess", "mass", "press", "series", "species", "news", "physics",
    "mathematics", "electronics", "athletics", "gymnastics", "politics", "economics", "jeans",
    "pants", "shorts", "trousers", "scissors", "pliers", "tongs", "clothes", "binoculars",
    "headphones", "earphones", "goggles", "sunglasses", "overalls", "pajamas", "tights",
    "leggings", "stairs", "surroundings", "outskirts", "premises", "headquarters", "sweets",
    "this", "his", "hers", "its", "ours", "yours", "theirs", "is", "was", "has", "does", "yes",
    "us", "thus", "as", "always", "perhaps", "whereas", "besides", "sometimes", "towards",
    "afterwards", "downstairs", "upstairs", "indoors", "outdoors", "overseas", "less", "unless",
    "across", "nevertheless", "various", "numerous", "famous", "delicious", "gorgeous",
    "dangerous", "previous", "serious", "curious", "nervous", "enormous", "fabulous", "tennis",
    "analysis", "basis", "crisis", "axis", "oasis", "thesis", "diagnosis", "emphasis",
    "bonus", "cactus", "campus", "circus", "octopus", "hippopotamus", "walrus", "virus",
    "status", "focus", "census", "asparagus", "hibiscus", "citrus", "chorus", "fungus",
    "platypus", "lotus", "eucalyptus", "bias", "chaos", "cosmos", "pancreas", "christmas",
    "texas", "kansas", "paris", "swanage", "sheep", "deer", "fish", "moose", "aircraft",
    "bison", "salmon", "trout", "shrimp", "offspring", "means", "savings", "lyrics", "odds",
];

fn irregular(word: &str) -> Option<&'static str> {
    IRREGULAR
        .iter()
        .find(|(plural, _)| *plural == word)
        .map(|(_, single)| *single)
}

fn is_invariant(word: &str) -> bool {
    INVARIANT.contains(&word) || IRREGULAR.iter().any(|(_, single)| *single == word)
}

/// Lowercase `word` and reduce a plural to its singular form.
///
/// Rules, applied in order after the irregular and invariant tables:
/// `-ies → -y`, `-ches/-shes/-xes/-sses/-zzes → strip "es"`,
/// `-ses/-zes → strip "s"` (house, size), words ending in `ss`, `us` or
/// `is` unchanged, any other trailing `s` stripped. Words of three letters
/// or fewer are left alone. The mapping is idempotent.
pub fn singularize(word: &str) -> String {
    let w = word.to_lowercase();
    if let Some(single) = irregular(&w) {
        return single.to_string();
    }
    let out = apply_rules(w);
    // a stripped form can itself be an irregular plural ("mens" -> "men")
    irregular(&out).map(str::to_string).unwrap_or(out)
}

fn apply_rules(w: String) -> String {
    if is_invariant(&w) || w.chars().count() <= 3 || !w.ends_with('s') {
        return w;
    }
    if let Some(stem) = w.strip_suffix("ies") {
        return format!("{stem}y");
    }
    for suffix in ["ches", "shes", "xes", "sses", "zzes"] {
        if w.ends_with(suffix) {
            return w[..w.len() - 2].to_string();
        }
    }
    if w.ends_with("ses") || w.ends_with("zes") {
        return w[..w.len() - 1].to_string();
    }
    if w.ends_with("ss") || w.ends_with("us") || w.ends_with("is") {
        return w;
    }
    w[..w.len() - 1].to_string()
}

/// Lowercase and singularize every token.
pub fn standardize<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    tokens.iter().map(|t| singularize(t.as_ref())).collect()
}
