//! The grading prompt. Construction is byte-deterministic: the template below
//! is fixed and `{story}` is the only substitution, so a golden-file test can
//! pin the exact bytes sent to the judge.

use crate::EvalError;

/// Grading prompt template; `{story}` receives the beginning, a `***`
/// separator line, and the completion.
pub const EVAL_PROMPT_TEMPLATE: &str = "In the following exercise, the student is given a beginning of a story along with specific instructions for how the story should be completed. The student needs to complete it into a full story that adheres to these instructions. The exercise tests the student's language abilities, creativity, and ability to follow directions. The symbol *** marks the separator between the prescribed beginning and the student's completion.\n\n\n{story}\n\n\nPlease provide your general assessment about the part written by the student (the one after the *** symbol). Consider the following aspects:\n\n\n1. Grammar: Is the completion grammatically correct?\n2. Creativity: Does the completion show creativity and original thought?\n3. Consistency: Is the completion consistent with the beginning of the story?\n4. Plot: Does the plot of the completion make sense and is it coherent throughout?\n\n\nNow, grade the student's completion in terms of the following categories, each on a scale from 1 to 10.";

/// Instantiates the template for a `***`-separated story.
pub fn build_eval_prompt(story_with_separator: &str) -> Result<String, EvalError> {
    if !story_with_separator.contains("***") {
        return Err(EvalError::MissingSeparator);
    }
    Ok(EVAL_PROMPT_TEMPLATE.replace("{story}", story_with_separator))
}
