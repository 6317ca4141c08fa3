use serde::{Deserialize, Serialize};

use crate::domain::{Commentary, GenerationContext};
use crate::text::word_count;

/// Tokenizer-agnostic length estimate: whitespace words times a factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenBudget {
    pub max_tokens: usize,
    pub tokens_per_word: f64,
}

impl Default for TokenBudget {
    fn default() -> Self {
        TokenBudget {
            max_tokens: 4096,
            tokens_per_word: 1.3,
        }
    }
}

impl TokenBudget {
    pub fn estimate_words(&self, words: usize) -> usize {
        (words as f64 * self.tokens_per_word).ceil() as usize
    }

    fn commentary_words(c: &Commentary) -> usize {
        c.render().map_or_else(|_| word_count(&c.plain_text()), |r| word_count(&r))
    }

    /// Words in the fields that are never dropped: clip reference, title and
    /// the current step's partial output.
    fn scaffold_words(ctx: &GenerationContext) -> usize {
        1 + word_count(&ctx.title) + ctx.partial.iter().map(|p| word_count(p)).sum::<usize>()
    }

    pub fn estimate(&self, ctx: &GenerationContext) -> usize {
        let preceding: usize = ctx.preceding.iter().map(Self::commentary_words).sum();
        self.estimate_words(Self::scaffold_words(ctx) + preceding)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("context overflow: step scaffolding needs {needed} tokens, budget is {budget}")]
pub struct ContextOverflow {
    pub needed: usize,
    pub budget: usize,
}

/// Drops whole preceding commentaries, oldest first, until the estimate fits.
/// `reserved` tokens are held back for extra request fields such as a passage.
pub fn truncate_context(
    ctx: &GenerationContext,
    budget: &TokenBudget,
    reserved: usize,
) -> Result<GenerationContext, ContextOverflow> {
    let limit = budget.max_tokens;
    let scaffold = budget.estimate_words(TokenBudget::scaffold_words(ctx)) + reserved;
    if scaffold > limit {
        return Err(ContextOverflow {
            needed: scaffold,
            budget: limit,
        });
    }
    let sizes: Vec<usize> = ctx.preceding.iter().map(TokenBudget::commentary_words).collect();
    let scaffold_words = TokenBudget::scaffold_words(ctx);
    let mut drop = 0;
    let mut kept: usize = sizes.iter().sum();
    while budget.estimate_words(scaffold_words + kept) + reserved > limit {
        kept -= sizes[drop];
        drop += 1;
    }
    let mut out = ctx.clone();
    out.preceding.drain(..drop);
    Ok(out)
}
