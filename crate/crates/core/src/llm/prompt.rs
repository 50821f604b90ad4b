//! Prompt rendering. The template is frozen: golden-fixture tests compare the
//! rendered bytes exactly, so any edit here must update the fixtures too.

use crate::types::{MemoryWindow, Name, PayoffRule};

/// The system/user message pair sent for one decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
}

/// Fixed user turn; the variable content all lives in the system prompt.
pub const USER_PROMPT: &str = "Answer saying which action Player 1 should play.";

/// Renders the decision prompt for one agent ("Player 1"): game rules with
/// the payoffs and the shuffled option order, the remembered history one line
/// per round, then the current round number and windowed score. The round
/// number continues the agent's own interaction count (window start + stored
/// records + 1), so it keeps advancing after the window starts evicting.
pub fn build_prompt(
    payoffs: &PayoffRule,
    presented: &[Name],
    memory: &MemoryWindow,
    stated_rounds: u32,
) -> PromptBundle {
    let values = presented
        .iter()
        .map(Name::as_str)
        .collect::<Vec<_>>()
        .join(", ");
    let mut paragraphs: Vec<String> = Vec::with_capacity(memory.len() + 5);
    paragraphs.push(format!(
        "Context: Player 1 is playing a multi-round partnership game with Player 2 for \
         {stated_rounds} rounds. At each round, Player 1 and Player 2 simultaneously pick an \
         action from the following values: [{values}]. The payoff that both players get is \
         determined by the following rule:"
    ));
    paragraphs.push(format!(
        "1. If Players play the SAME action as each other, they will both be REWARDED with \
         payoff {} points.",
        payoffs.reward()
    ));
    paragraphs.push(format!(
        "2. If Players play DIFFERENT actions to each other, they will both be PUNISHED with \
         payoff {} points.",
        payoffs.penalty()
    ));
    let objective = "The objective of each Player is to maximize their own accumulated point \
                     tally, conditional on the behavior of the other player.";
    if memory.is_empty() {
        paragraphs.push(objective.to_owned());
    } else {
        paragraphs.push(format!(
            "{objective} This is the history of choices in past rounds:"
        ));
        for record in memory.iter() {
            paragraphs.push(format!(
                "{{'round':{}, 'Player 1': {}, 'Player 2': {}, 'payoff': {}}}",
                record.round, record.own, record.partner, record.payoff
            ));
        }
    }
    paragraphs.push(format!(
        "It is now round {}. The current score of Player 1 is {}. Answer saying which value \
         Player 1 should pick. Please think step by step before making a decision. Remember, \
         examining history explicitly is important. Write your answer using the following \
         format: {{'value': <VALUE_OF_PLAYER_1>; 'reason': <YOUR_REASON>}}",
        memory.next_round(),
        memory.windowed_score()
    ));
    PromptBundle {
        system: paragraphs.join("\n\n"),
        user: USER_PROMPT.to_owned(),
    }
}
