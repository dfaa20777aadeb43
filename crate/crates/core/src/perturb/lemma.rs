//! Built-in verb lemmatizer: an irregular-verb table plus `-s`, `-ed` and
//! `-ing` stripping checked against a list of base forms.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

/// (base, past, past participle, third person singular)
const IRREGULAR: &[(&str, &str, &str, &str)] = &[
    ("be", "was", "been", "is"),
    ("be", "were", "been", "is"),
    ("have", "had", "had", "has"),
    ("do", "did", "done", "does"),
    ("go", "went", "gone", "goes"),
    ("say", "said", "said", "says"),
    ("make", "made", "made", "makes"),
    ("get", "got", "gotten", "gets"),
    ("know", "knew", "known", "knows"),
    ("think", "thought", "thought", "thinks"),
    ("take", "took", "taken", "takes"),
    ("see", "saw", "seen", "sees"),
    ("come", "came", "come", "comes"),
    ("give", "gave", "given", "gives"),
    ("find", "found", "found", "finds"),
    ("tell", "told", "told", "tells"),
    ("become", "became", "become", "becomes"),
    ("leave", "left", "left", "leaves"),
    ("feel", "felt", "felt", "feels"),
    ("bring", "brought", "brought", "brings"),
    ("begin", "began", "begun", "begins"),
    ("keep", "kept", "kept", "keeps"),
    ("hold", "held", "held", "holds"),
    ("write", "wrote", "written", "writes"),
    ("stand", "stood", "stood", "stands"),
    ("hear", "heard", "heard", "hears"),
    ("let", "let", "let", "lets"),
    ("mean", "meant", "meant", "means"),
    ("set", "set", "set", "sets"),
    ("meet", "met", "met", "meets"),
    ("run", "ran", "run", "runs"),
    ("pay", "paid", "paid", "pays"),
    ("sit", "sat", "sat", "sits"),
    ("speak", "spoke", "spoken", "speaks"),
    ("lie", "lay", "lain", "lies"),
    ("lead", "led", "led", "leads"),
    ("read", "read", "read", "reads"),
    ("grow", "grew", "grown", "grows"),
    ("lose", "lost", "lost", "loses"),
    ("fall", "fell", "fallen", "falls"),
    ("send", "sent", "sent", "sends"),
    ("build", "built", "built", "builds"),
    ("understand", "understood", "understood", "understands"),
    ("draw", "drew", "drawn", "draws"),
    ("break", "broke", "broken", "breaks"),
    ("spend", "spent", "spent", "spends"),
    ("cut", "cut", "cut", "cuts"),
    ("rise", "rose", "risen", "rises"),
    ("drive", "drove", "driven", "drives"),
    ("buy", "bought", "bought", "buys"),
    ("wear", "wore", "worn", "wears"),
    ("choose", "chose", "chosen", "chooses"),
    ("seek", "sought", "sought", "seeks"),
    ("throw", "threw", "thrown", "throws"),
    ("catch", "caught", "caught", "catches"),
    ("deal", "dealt", "dealt", "deals"),
    ("win", "won", "won", "wins"),
    ("forget", "forgot", "forgotten", "forgets"),
    ("sell", "sold", "sold", "sells"),
    ("fight", "fought", "fought", "fights"),
    ("teach", "taught", "taught", "teaches"),
    ("eat", "ate", "eaten", "eats"),
    ("sing", "sang", "sung", "sings"),
    ("drink", "drank", "drunk", "drinks"),
    ("swim", "swam", "swum", "swims"),
    ("fly", "flew", "flown", "flies"),
    ("hide", "hid", "hidden", "hides"),
    ("ride", "rode", "ridden", "rides"),
    ("shake", "shook", "shaken", "shakes"),
    ("steal", "stole", "stolen", "steals"),
    ("strike", "struck", "struck", "strikes"),
    ("shoot", "shot", "shot", "shoots"),
    ("sleep", "slept", "slept", "sleeps"),
    ("sweep", "swept", "swept", "sweeps"),
    ("feed", "fed", "fed", "feeds"),
    ("bite", "bit", "bitten", "bites"),
    ("blow", "blew", "blown", "blows"),
    ("freeze", "froze", "frozen", "freezes"),
    ("hang", "hung", "hung", "hangs"),
    ("hit", "hit", "hit", "hits"),
    ("hurt", "hurt", "hurt", "hurts"),
    ("put", "put", "put", "puts"),
    ("quit", "quit", "quit", "quits"),
    ("shut", "shut", "shut", "shuts"),
    ("spread", "spread", "spread", "spreads"),
    ("bear", "bore", "borne", "bears"),
    ("beat", "beat", "beaten", "beats"),
    ("bend", "bent", "bent", "bends"),
    ("bind", "bound", "bound", "binds"),
    ("bleed", "bled", "bled", "bleeds"),
    ("breed", "bred", "bred", "breeds"),
    ("cling", "clung", "clung", "clings"),
    ("dig", "dug", "dug", "digs"),
    ("flee", "fled", "fled", "flees"),
    ("forbid", "forbade", "forbidden", "forbids"),
    ("forgive", "forgave", "forgiven", "forgives"),
    ("grind", "ground", "ground", "grinds"),
    ("kneel", "knelt", "knelt", "kneels"),
    ("lay", "laid", "laid", "lays"),
    ("lend", "lent", "lent", "lends"),
    ("light", "lit", "lit", "lights"),
    ("ring", "rang", "rung", "rings"),
    ("seize", "seized", "seized", "seizes"),
    ("shine", "shone", "shone", "shines"),
    ("shrink", "shrank", "shrunk", "shrinks"),
    ("sink", "sank", "sunk", "sinks"),
    ("slide", "slid", "slid", "slides"),
    ("spin", "spun", "spun", "spins"),
    ("stick", "stuck", "stuck", "sticks"),
    ("sting", "stung", "stung", "stings"),
    ("swear", "swore", "sworn", "swears"),
    ("swing", "swung", "swung", "swings"),
    ("tear", "tore", "torn", "tears"),
    ("wake", "woke", "woken", "wakes"),
    ("weep", "wept", "wept", "weeps"),
    ("wind", "wound", "wound", "winds"),
    ("withdraw", "withdrew", "withdrawn", "withdraws"),
    ("arise", "arose", "arisen", "arises"),
    ("awake", "awoke", "awoken", "awakes"),
    ("forecast", "forecast", "forecast", "forecasts"),
    ("overcome", "overcame", "overcome", "overcomes"),
    ("undertake", "undertook", "undertaken", "undertakes"),
];

/// Regular verbs recognised by suffix stripping.
const REGULAR: &[&str] = &[
    "accept", "achieve", "act", "add", "admit", "affect", "agree", "allow", "announce", "answer",
    "appear", "apply", "argue", "arrive", "ask", "attack", "attempt", "attend", "avoid", "believe",
    "belong", "call", "care", "carry", "cause", "change", "charge", "check", "claim", "clean",
    "close", "collect", "compare", "complain", "complete", "concern", "confirm", "consider",
    "contain", "continue", "control", "cook", "copy", "cost", "count", "cover", "create", "cross",
    "cry", "damage", "dance", "decide", "declare", "defend", "deliver", "demand", "deny",
    "depend", "describe", "design", "destroy", "develop", "die", "discover", "discuss", "drop",
    "earn", "employ", "enable", "encourage", "end", "enjoy", "enter", "escape", "establish",
    "examine", "exist", "expect", "explain", "express", "face", "fail", "fill", "finish", "fix",
    "follow", "force", "form", "gain", "happen", "hate", "help", "hope", "identify", "ignore",
    "imagine", "improve", "include", "increase", "indicate", "inform", "insist", "intend",
    "introduce", "invite", "involve", "join", "jump", "kill", "kiss", "knock", "land", "last",
    "laugh", "learn", "like", "link", "listen", "live", "look", "love", "manage", "mark", "marry",
    "matter", "mention", "mind", "miss", "move", "name", "need", "note", "notice", "obtain",
    "occur", "offer", "open", "order", "own", "pass", "perform", "pick", "place", "plan", "plant",
    "play", "point", "prefer", "prepare", "present", "press", "prevent", "produce", "promise",
    "protect", "prove", "provide", "publish", "pull", "push", "raise", "reach", "realise",
    "realize", "receive", "recognise", "recognize", "record", "reduce", "refer", "reflect",
    "refuse", "regard", "release", "rely", "remain", "remember", "remove", "repeat", "replace",
    "reply", "report", "represent", "require", "rest", "return", "reveal", "roll", "save",
    "score", "seem", "separate", "serve", "settle", "share", "shout", "show", "sign", "smile",
    "sound", "start", "state", "stay", "step", "stop", "study", "succeed", "suffer", "suggest",
    "supply", "support", "suppose", "surprise", "survive", "talk", "test", "thank", "touch",
    "train", "travel", "treat", "try", "turn", "use", "vote", "visit", "wait", "walk", "want",
    "warn", "wash", "watch", "wish", "wonder", "work", "worry",
];

struct Tables {
    /// inflected form -> (base, is_past)
    inflected: HashMap<&'static str, (&'static str, Form)>,
    bases: HashSet<&'static str>,
    participles: HashSet<&'static str>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    Base,
    Past,
    Participle,
    ThirdPerson,
    Gerund,
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut inflected = HashMap::new();
        let mut bases: HashSet<&'static str> = REGULAR.iter().copied().collect();
        let mut participles = HashSet::new();
        for &(base, past, pp, third) in IRREGULAR {
            bases.insert(base);
            inflected.entry(third).or_insert((base, Form::ThirdPerson));
            inflected.entry(pp).or_insert((base, Form::Participle));
            inflected.insert(past, (base, Form::Past));
            participles.insert(pp);
        }
        inflected.insert("am", ("be", Form::Base));
        inflected.insert("are", ("be", Form::Base));
        Tables {
            inflected,
            bases,
            participles,
        }
    })
}

fn undouble(stem: &str) -> Option<String> {
    let b = stem.as_bytes();
    let n = b.len();
    (n >= 2 && b[n - 1] == b[n - 2]).then(|| stem[..n - 1].to_string())
}

fn suffix_candidates(w: &str) -> Vec<(String, Form)> {
    let mut out = Vec::new();
    if let Some(stem) = w.strip_suffix("ies") {
        out.push((format!("{stem}y"), Form::ThirdPerson));
    }
    if let Some(stem) = w.strip_suffix("ied") {
        out.push((format!("{stem}y"), Form::Past));
    }
    if let Some(stem) = w.strip_suffix("ing") {
        out.push((stem.to_string(), Form::Gerund));
        out.push((format!("{stem}e"), Form::Gerund));
        out.extend(undouble(stem).map(|s| (s, Form::Gerund)));
    }
    if let Some(stem) = w.strip_suffix("ed") {
        out.push((stem.to_string(), Form::Past));
        out.push((format!("{stem}e"), Form::Past));
        out.extend(undouble(stem).map(|s| (s, Form::Past)));
    }
    if let Some(stem) = w.strip_suffix("es") {
        out.push((stem.to_string(), Form::ThirdPerson));
    }
    if let Some(stem) = w.strip_suffix('s') {
        out.push((stem.to_string(), Form::ThirdPerson));
    }
    out
}

/// Lemma and form of a known verb, lowercased. `None` for unknown words.
pub fn analyze(word: &str) -> Option<(String, Form)> {
    let lower = word.to_lowercase();
    let t = tables();
    if let Some(&(base, form)) = t.inflected.get(lower.as_str()) {
        return Some((base.to_string(), form));
    }
    if t.bases.contains(lower.as_str()) {
        return Some((lower, Form::Base));
    }
    suffix_candidates(&lower)
        .into_iter()
        .find(|(c, _)| t.bases.contains(c.as_str()))
}

/// Lemmatize, keeping a leading capital.
pub fn lemmatize(word: &str) -> Option<String> {
    analyze(word).map(|(lemma, _)| match_case(word, &lemma))
}

pub fn is_participle(word: &str) -> bool {
    let lower = word.to_lowercase();
    tables().participles.contains(lower.as_str())
        || matches!(analyze(&lower), Some((_, Form::Past)) if lower.ends_with("ed"))
}

/// Copy the capitalization of `model`'s first letter onto `word`.
pub fn match_case(model: &str, word: &str) -> String {
    let upper = model.chars().next().is_some_and(char::is_uppercase);
    let mut chars = word.chars();
    match chars.next() {
        Some(c) if upper => c.to_uppercase().chain(chars).collect(),
        _ => word.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn irregular_and_regular_forms() {
        assert_eq!(lemmatize("went").as_deref(), Some("go"));
        assert_eq!(lemmatize("Went").as_deref(), Some("Go"));
        assert_eq!(lemmatize("walked").as_deref(), Some("walk"));
        assert_eq!(lemmatize("talked").as_deref(), Some("talk"));
        assert_eq!(lemmatize("stopped").as_deref(), Some("stop"));
        assert_eq!(lemmatize("carries").as_deref(), Some("carry"));
        assert_eq!(lemmatize("moving").as_deref(), Some("move"));
        assert_eq!(lemmatize("is").as_deref(), Some("be"));
        assert_eq!(lemmatize("go").as_deref(), Some("go"));
        assert_eq!(lemmatize("office"), None);
    }

    #[test]
    fn forms() {
        assert_eq!(analyze("went").unwrap().1, Form::Past);
        assert_eq!(analyze("walks").unwrap().1, Form::ThirdPerson);
        assert_eq!(analyze("walk").unwrap().1, Form::Base);
        assert!(is_participle("gone"));
        assert!(is_participle("walked"));
        assert!(!is_participle("walk"));
    }
}
