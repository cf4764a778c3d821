//! English Snowball stemmer (Porter2).
//!
//! Follows the published Snowball English algorithm: exceptional forms, apostrophe
//! handling, `y`/`Y` marking, R1/R2 regions and steps 1a through 5.

const DOUBLES: [&str; 9] = ["bb", "dd", "ff", "gg", "mm", "nn", "pp", "rr", "tt"];

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

fn is_valid_li(c: char) -> bool {
    matches!(c, 'c' | 'd' | 'e' | 'g' | 'h' | 'k' | 'm' | 'n' | 'r' | 't')
}

/// Whole-word exceptions checked before any other processing.
fn exception1(word: &str) -> Option<&'static str> {
    Some(match word {
        "skis" => "ski",
        "skies" => "sky",
        "dying" => "die",
        "lying" => "lie",
        "tying" => "tie",
        "idly" => "idl",
        "gently" => "gentl",
        "ugly" => "ugli",
        "early" => "earli",
        "only" => "onli",
        "singly" => "singl",
        "sky" => "sky",
        "news" => "news",
        "howe" => "howe",
        "atlas" => "atlas",
        "cosmos" => "cosmos",
        "bias" => "bias",
        "andes" => "andes",
        _ => return None,
    })
}

/// Words left untouched once step 1a has run.
const EXCEPTION2: [&str; 8] = [
    "inning", "outing", "canning", "herring", "earring", "proceed", "exceed", "succeed",
];

struct Word {
    chars: Vec<char>,
    p1: usize,
    p2: usize,
}

impl Word {
    fn len(&self) -> usize {
        self.chars.len()
    }

    fn ends_with(&self, suffix: &str) -> bool {
        let n = suffix.chars().count();
        n <= self.len() && self.chars[self.len() - n..].iter().copied().eq(suffix.chars())
    }

    /// Longest suffix from `candidates` that the word ends with.
    fn longest_suffix<'a>(&self, candidates: &[&'a str]) -> Option<&'a str> {
        candidates
            .iter()
            .filter(|s| self.ends_with(s))
            .max_by_key(|s| s.len())
            .copied()
    }

    fn replace_suffix(&mut self, suffix_len: usize, with: &str) {
        let keep = self.len() - suffix_len;
        self.chars.truncate(keep);
        self.chars.extend(with.chars());
    }

    fn has_vowel(&self, range: std::ops::Range<usize>) -> bool {
        self.chars[range].iter().any(|&c| is_vowel(c))
    }

    /// Short syllable ending at position `end` (exclusive).
    fn short_syllable_before(&self, end: usize) -> bool {
        let c = &self.chars;
        if end >= 3 {
            let (a, b, d) = (c[end - 3], c[end - 2], c[end - 1]);
            if !is_vowel(a) && is_vowel(b) && !is_vowel(d) && !matches!(d, 'w' | 'x' | 'Y') {
                return true;
            }
        }
        end == 2 && is_vowel(c[0]) && !is_vowel(c[1])
    }

    fn in_r1(&self, suffix_len: usize) -> bool {
        self.len() - suffix_len >= self.p1
    }

    fn in_r2(&self, suffix_len: usize) -> bool {
        self.len() - suffix_len >= self.p2
    }
}

fn mark_regions(chars: &[char]) -> (usize, usize) {
    let len = chars.len();
    // Position just past the first non-vowel that follows a vowel, searching from `from`.
    let region_after = |from: usize| -> usize {
        let mut i = from;
        while i < len && !is_vowel(chars[i]) {
            i += 1;
        }
        while i < len && is_vowel(chars[i]) {
            i += 1;
        }
        if i < len {
            i + 1
        } else {
            len
        }
    };
    let starts_with = |p: &str| chars.len() >= p.len() && chars.iter().take(p.len()).copied().eq(p.chars());
    let p1 = ["gener", "commun", "arsen"]
        .iter()
        .find(|p| starts_with(p))
        .map(|p| p.len())
        .unwrap_or_else(|| region_after(0));
    let p2 = if p1 < len { region_after(p1) } else { len };
    (p1, p2)
}

fn step_1a(w: &mut Word) {
    if let Some(suffix) = w.longest_suffix(&["'", "'s", "'s'"]) {
        let n = suffix.chars().count();
        w.replace_suffix(n, "");
    }
    let Some(suffix) = w.longest_suffix(&["sses", "ied", "ies", "s", "us", "ss"]) else {
        return;
    };
    match suffix {
        "sses" => w.replace_suffix(4, "ss"),
        "ied" | "ies" => {
            let replacement = if w.len() - 3 >= 2 { "i" } else { "ie" };
            w.replace_suffix(3, replacement);
        }
        "s" => {
            let stem_len = w.len() - 1;
            if stem_len >= 2 && w.has_vowel(0..stem_len - 1) {
                w.replace_suffix(1, "");
            }
        }
        _ => {}
    }
}

fn step_1b(w: &mut Word) {
    let Some(suffix) = w.longest_suffix(&["eed", "eedly", "ed", "edly", "ing", "ingly"]) else {
        return;
    };
    let n = suffix.len();
    if suffix.starts_with("eed") {
        if w.in_r1(n) {
            w.replace_suffix(n, "ee");
        }
        return;
    }
    if !w.has_vowel(0..w.len() - n) {
        return;
    }
    w.replace_suffix(n, "");
    if w.ends_with("at") || w.ends_with("bl") || w.ends_with("iz") {
        w.chars.push('e');
    } else if DOUBLES.iter().any(|d| w.ends_with(d)) {
        w.chars.pop();
    } else if w.len() == w.p1 && w.short_syllable_before(w.len()) {
        w.chars.push('e');
    }
}

fn step_1c(w: &mut Word) {
    let len = w.len();
    if len >= 3 {
        let last = w.chars[len - 1];
        if (last == 'y' || last == 'Y') && !is_vowel(w.chars[len - 2]) {
            w.chars[len - 1] = 'i';
        }
    }
}

const STEP2_SUFFIXES: [&str; 24] = [
    "anci", "enci", "ogi", "li", "bli", "abli", "alli", "fulli", "lessli", "ousli", "entli", "aliti", "biliti",
    "iviti", "tional", "ational", "alism", "ation", "ization", "izer", "ator", "iveness", "fulness", "ousness",
];

fn step_2(w: &mut Word) {
    let Some(suffix) = w.longest_suffix(&STEP2_SUFFIXES) else {
        return;
    };
    let n = suffix.len();
    if !w.in_r1(n) {
        return;
    }
    let replacement = match suffix {
        "tional" => "tion",
        "enci" => "ence",
        "anci" => "ance",
        "abli" => "able",
        "entli" => "ent",
        "izer" | "ization" => "ize",
        "ational" | "ation" | "ator" => "ate",
        "alism" | "aliti" | "alli" => "al",
        "fulness" | "fulli" => "ful",
        "ousli" | "ousness" => "ous",
        "iveness" | "iviti" => "ive",
        "biliti" | "bli" => "ble",
        "lessli" => "less",
        "ogi" => {
            if w.len() > n && w.chars[w.len() - n - 1] == 'l' {
                "og"
            } else {
                return;
            }
        }
        "li" => {
            if w.len() > n && is_valid_li(w.chars[w.len() - n - 1]) {
                ""
            } else {
                return;
            }
        }
        _ => unreachable!("unhandled step 2 suffix {suffix}"),
    };
    w.replace_suffix(n, replacement);
}

fn step_3(w: &mut Word) {
    let candidates = [
        "tional", "ational", "alize", "icate", "iciti", "ative", "ical", "ful", "ness",
    ];
    let Some(suffix) = w.longest_suffix(&candidates) else {
        return;
    };
    let n = suffix.len();
    if !w.in_r1(n) {
        return;
    }
    match suffix {
        "tional" => w.replace_suffix(n, "tion"),
        "ational" => w.replace_suffix(n, "ate"),
        "alize" => w.replace_suffix(n, "al"),
        "icate" | "iciti" | "ical" => w.replace_suffix(n, "ic"),
        "ful" | "ness" => w.replace_suffix(n, ""),
        "ative" => {
            if w.in_r2(n) {
                w.replace_suffix(n, "");
            }
        }
        _ => unreachable!(),
    }
}

fn step_4(w: &mut Word) {
    let candidates = [
        "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement", "ment", "ent", "ism", "ate", "iti",
        "ous", "ive", "ize", "ion",
    ];
    let Some(suffix) = w.longest_suffix(&candidates) else {
        return;
    };
    let n = suffix.len();
    if !w.in_r2(n) {
        return;
    }
    if suffix == "ion" {
        let before = w.len().checked_sub(n + 1).map(|i| w.chars[i]);
        if matches!(before, Some('s') | Some('t')) {
            w.replace_suffix(n, "");
        }
    } else {
        w.replace_suffix(n, "");
    }
}

fn step_5(w: &mut Word) {
    if w.ends_with("e") {
        if w.in_r2(1) || (w.in_r1(1) && !w.short_syllable_before(w.len() - 1)) {
            w.chars.pop();
        }
    } else if w.ends_with("l") && w.in_r2(1) && w.len() >= 2 && w.chars[w.len() - 2] == 'l' {
        w.chars.pop();
    }
}

/// Stems one lowercase English word.
pub fn stem_word(word: &str) -> String {
    if let Some(fixed) = exception1(word) {
        return fixed.to_string();
    }
    let mut chars: Vec<char> = word.chars().collect();
    if chars.len() < 3 {
        return word.to_string();
    }

    // Prelude.
    if chars[0] == '\'' {
        chars.remove(0);
    }
    let mut y_found = false;
    if chars.first() == Some(&'y') {
        chars[0] = 'Y';
        y_found = true;
    }
    for i in 1..chars.len() {
        if chars[i] == 'y' && is_vowel(chars[i - 1]) {
            chars[i] = 'Y';
            y_found = true;
        }
    }

    let (p1, p2) = mark_regions(&chars);
    let mut w = Word { chars, p1, p2 };

    step_1a(&mut w);
    let text: String = w.chars.iter().collect();
    if !EXCEPTION2.contains(&text.as_str()) {
        step_1b(&mut w);
        step_1c(&mut w);
        step_2(&mut w);
        step_3(&mut w);
        step_4(&mut w);
        step_5(&mut w);
    }

    if y_found {
        for c in w.chars.iter_mut() {
            if *c == 'Y' {
                *c = 'y';
            }
        }
    }
    w.chars.into_iter().collect()
}
