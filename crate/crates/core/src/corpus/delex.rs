use regex::Regex;

/// Placeholder substituted for every generated surface value.
pub const DELEX_TOKEN: &str = "<delex>";

/// A named token matcher used by [`delexicalize`].
pub struct DelexPattern {
    pub name: &'static str,
    matcher: Box<dyn Fn(&str) -> bool + Send + Sync>,
}

impl DelexPattern {
    pub fn new(name: &'static str, matcher: impl Fn(&str) -> bool + Send + Sync + 'static) -> Self {
        Self {
            name,
            matcher: Box::new(matcher),
        }
    }

    fn regex(name: &'static str, re: &str) -> Self {
        let re = Regex::new(re).expect("static pattern");
        Self::new(name, move |t| re.is_match(t))
    }

    pub fn matches(&self, token: &str) -> bool {
        (self.matcher)(token)
    }
}

impl std::fmt::Debug for DelexPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DelexPattern").field("name", &self.name).finish()
    }
}

/// Reference numbers, train ids, phone numbers, clock times and postcodes.
pub fn default_patterns() -> Vec<DelexPattern> {
    vec![
        DelexPattern::regex("train_id", r"(?i)^tr\d{4}$"),
        DelexPattern::new("reference", |t| {
            let two_letters_five_digits = t.len() == 7
                && t[..2].chars().all(|c| c.is_ascii_alphabetic())
                && t[2..].chars().all(|c| c.is_ascii_digit());
            // booking references are 8 mixed alphanumerics
            let mixed8 = t.len() == 8
                && t.chars().all(|c| c.is_ascii_alphanumeric())
                && t.chars().any(|c| c.is_ascii_digit())
                && t.chars().any(|c| c.is_ascii_alphabetic());
            two_letters_five_digits || mixed8
        }),
        DelexPattern::regex("phone", r"^\+?\d[\d-]{8,13}\d$"),
        DelexPattern::regex("time", r"^([01]?\d|2[0-3]):[0-5]\d$"),
        DelexPattern::regex("postcode", r"(?i)^[a-z]{1,2}\d{1,2}[a-z]?\d[a-z]{2}$"),
    ]
}

/// Replaces every token matched by any pattern with [`DELEX_TOKEN`].
/// Length and all other tokens are preserved.
pub fn delexicalize(tokens: &[String], patterns: &[DelexPattern]) -> Vec<String> {
    tokens
        .iter()
        .map(|t| {
            if t != DELEX_TOKEN && patterns.iter().any(|p| p.matches(t)) {
                DELEX_TOKEN.to_string()
            } else {
                t.clone()
            }
        })
        .collect()
}
