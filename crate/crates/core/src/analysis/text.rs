//! Per-prompt text measures: sentiment polarity and readability.

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::domain::SentimentRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentProbabilities {
    pub p_negative: f64,
    pub p_neutral: f64,
    pub p_positive: f64,
}

impl SentimentProbabilities {
    pub fn new(p_negative: f64, p_neutral: f64, p_positive: f64) -> Result<Self, AnalysisError> {
        let p = Self {
            p_negative,
            p_neutral,
            p_positive,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        let ps = [self.p_negative, self.p_neutral, self.p_positive];
        if ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(AnalysisError::Validation(format!("sentiment probabilities {ps:?} outside [0, 1]")));
        }
        let sum: f64 = ps.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(AnalysisError::Validation(format!("sentiment probabilities sum to {sum}")));
        }
        Ok(())
    }

    pub fn to_record(self) -> Result<SentimentRecord, AnalysisError> {
        Ok(SentimentRecord {
            p_negative: self.p_negative,
            p_neutral: self.p_neutral,
            p_positive: self.p_positive,
            score: sentiment_score(&self)?,
        })
    }
}

/// Polarity index in [-1, 1]: negative weighs -1, neutral 0, positive +1.
pub fn sentiment_score(p: &SentimentProbabilities) -> Result<f64, AnalysisError> {
    p.validate()?;
    Ok(p.p_positive - p.p_negative)
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Syllable estimate: number of vowel groups, minus a final silent `e`
/// (not `-le`), never below one.
pub fn count_syllables(word: &str) -> usize {
    let w: Vec<char> = word
        .chars()
        .filter(|c| c.is_ascii_alphabetic())
        .map(|c| c.to_ascii_lowercase())
        .collect();
    if w.is_empty() {
        return 0;
    }
    let mut groups = 0;
    let mut prev_vowel = false;
    for &c in &w {
        let v = is_vowel(c);
        if v && !prev_vowel {
            groups += 1;
        }
        prev_vowel = v;
    }
    let n = w.len();
    let silent_e = n >= 2 && w[n - 1] == 'e' && !is_vowel(w[n - 2]) && !(n >= 3 && w[n - 2] == 'l' && !is_vowel(w[n - 3]));
    if silent_e && groups > 1 {
        groups -= 1;
    }
    groups.max(1)
}

fn is_word(token: &str) -> bool {
    token.chars().any(char::is_alphanumeric)
}

/// Sentences are runs of text separated by `.`, `!` or `?` that contain at
/// least one word; an unterminated trailing fragment counts as a sentence.
pub fn count_sentences(text: &str) -> usize {
    text.split(['.', '!', '?'])
        .filter(|s| s.split_whitespace().any(is_word))
        .count()
}

/// Flesch Reading Ease: `206.835 - 1.015 * words/sentences - 84.6 * syllables/words`.
pub fn flesch_reading_ease(text: &str) -> Result<f64, AnalysisError> {
    let words: Vec<&str> = text.split_whitespace().filter(|t| is_word(t)).collect();
    if words.is_empty() {
        return Err(AnalysisError::Validation("text has no words".into()));
    }
    let sentences = count_sentences(text);
    if sentences == 0 {
        return Err(AnalysisError::Validation("text has no sentences".into()));
    }
    let syllables: usize = words.iter().map(|w| count_syllables(w)).sum();
    let n_words = words.len() as f64;
    Ok(206.835 - 1.015 * (n_words / sentences as f64) - 84.6 * (syllables as f64 / n_words))
}
