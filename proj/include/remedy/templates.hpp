#pragma once

// Prompt templates. Placeholders are written {{name}} and are bound by
// corpus::render_template; anything else (including "[score]") is literal.
// Bump kTemplateVersion whenever any wording below changes.

#include <string_view>

namespace remedy::templates {

inline constexpr std::string_view kTemplateVersion = "remedy-templates/1";

// Pairwise training prompt (two candidates, scores for both).
inline constexpr std::string_view kPairwiseTrainWithRef =
    "You are an expert machine translation evaluator. You need to assess the quality of two "
    "translations of the same source text. Your task is to evaluate the translation quality and "
    "provide scores from 0-100, where higher scores indicate better quality. You are also given a "
    "reference (not always perfect) to help you assess the quality.\n"
    "\n"
    "Evaluation Criteria:\n"
    "- Accuracy: Whether the meaning expressed in the translation is correct and faithful to the "
    "source. Penalize mistranslation, unsupported additions/hallucinations, terminology errors, and "
    "untranslated text.\n"
    "- Fluency: How natural and grammatically correct the translation reads in the target language. "
    "Consider grammar, agreement, word order, punctuation, spelling, register.\n"
    "- Completeness: Is all information from the source conveyed without omissions?\n"
    "\n"
    "Instructions: Think step by step about the quality of each translation and write your analysis "
    "first, then provide your final scores. Evaluate each translation independently rather than by "
    "comparison.\n"
    "\n"
    "Output Format: Thinking through your evaluation first, then output the scores in exactly this "
    "format (do not give scores first):\n"
    "####\n"
    "A: [score]\n"
    "B: [score]\n"
    "\n"
    "Now evaluate this {{src_lang}}-{{tgt_lang}} translation:\n"
    "-----\n"
    "Source: {{source}}\n"
    "Reference: {{reference}}\n"
    "Translation A: {{translation_a}}\n"
    "Translation B: {{translation_b}}";

inline constexpr std::string_view kPairwiseTrainNoRef =
    "You are an expert machine translation evaluator. You need to assess the quality of two "
    "translations of the same source text. Your task is to evaluate the translation quality and "
    "provide scores from 0-100, where higher scores indicate better quality.\n"
    "\n"
    "Evaluation Criteria:\n"
    "- Accuracy: Whether the meaning expressed in the translation is correct and faithful to the "
    "source. Penalize mistranslation, unsupported additions/hallucinations, terminology errors, and "
    "untranslated text.\n"
    "- Fluency: How natural and grammatically correct the translation reads in the target language. "
    "Consider grammar, agreement, word order, punctuation, spelling, register.\n"
    "- Completeness: Is all information from the source conveyed without omissions?\n"
    "\n"
    "Instructions: Think step by step about the quality of each translation and write your analysis "
    "first, then provide your final scores. Evaluate each translation independently rather than by "
    "comparison.\n"
    "\n"
    "Output Format: Thinking through your evaluation first, then output the scores in exactly this "
    "format (do not give scores first):\n"
    "####\n"
    "A: [score]\n"
    "B: [score]\n"
    "\n"
    "Now evaluate this {{src_lang}}-{{tgt_lang}} translation:\n"
    "-----\n"
    "Source: {{source}}\n"
    "Translation A: {{translation_a}}\n"
    "Translation B: {{translation_b}}";

// Single-segment inference prompt.
inline constexpr std::string_view kSingleEvalWithRef =
    "You are an expert machine translation evaluator. You need to assess the quality of a single "
    "translation. Your task is to evaluate the translation quality and provide a score from 0-100, "
    "where higher scores indicate better quality. You are also given a reference (not always "
    "perfect) to help you assess the quality.\n"
    "\n"
    "Evaluation Criteria:\n"
    "- Accuracy: How well the translation preserves the meaning of the source\n"
    "- Fluency: How natural and grammatically correct the translation reads\n"
    "- Completeness: Whether all information from the source is conveyed, without unrelevant "
    "additions like instructions\n"
    "- Language Correctness: Ensure the translation is in the correct {{tgt_lang}} language without "
    "mixing languages\n"
    "\n"
    "Instructions: Think step by step about the quality of the translation, then provide your final "
    "score.\n"
    "\n"
    "Output Format: First, think through your evaluation step by step. Then provide your final "
    "answer in this exact format:\n"
    "#### Score: [score]\n"
    "\n"
    "Now evaluate this {{src_lang}}-{{tgt_lang}} translation:\n"
    "-----\n"
    "Source: {{source}}\n"
    "Reference: {{reference}}\n"
    "Translation: {{translation}}";

inline constexpr std::string_view kSingleEvalNoRef =
    "You are an expert machine translation evaluator. You need to assess the quality of a single "
    "translation. Your task is to evaluate the translation quality and provide a score from 0-100, "
    "where higher scores indicate better quality.\n"
    "\n"
    "Evaluation Criteria:\n"
    "- Accuracy: How well the translation preserves the meaning of the source\n"
    "- Fluency: How natural and grammatically correct the translation reads\n"
    "- Completeness: Whether all information from the source is conveyed, without unrelevant "
    "additions like instructions\n"
    "- Language Correctness: Ensure the translation is in the correct {{tgt_lang}} language without "
    "mixing languages\n"
    "\n"
    "Instructions: Think step by step about the quality of the translation, then provide your final "
    "score.\n"
    "\n"
    "Output Format: First, think through your evaluation step by step. Then provide your final "
    "answer in this exact format:\n"
    "#### Score: [score]\n"
    "\n"
    "Now evaluate this {{src_lang}}-{{tgt_lang}} translation:\n"
    "-----\n"
    "Source: {{source}}\n"
    "Translation: {{translation}}";

// Refinement prompt. The feedback variant is the plain variant with
// kRefineFeedbackBlock spliced in at the {{feedback_block}} position, so the
// two arms of a feedback/no-feedback comparison differ only in that block.
inline constexpr std::string_view kRefine =
    "You are an expert translator. Revise the {{src_lang}}-{{tgt_lang}} translation below so that "
    "it is accurate, fluent, and complete.\n"
    "\n"
    "Source: {{source}}\n"
    "Current translation: {{translation}}\n"
    "{{feedback_block}}"
    "\n"
    "Output only the revised {{tgt_lang}} translation, with no explanations.";

inline constexpr std::string_view kRefineFeedbackBlock =
    "\n"
    "Feedback (an evaluation of the current translation; fix the problems it identifies):\n"
    "{{feedback}}\n";

// Faithfulness judge (system + user messages).
inline constexpr std::string_view kFaithfulnessSystem =
    "You are a strict verifier. Your job is to score the FAITHFULNESS of an evaluation explanation. "
    "You must return ONLY a single valid JSON object and nothing else.";

inline constexpr std::string_view kFaithfulnessUser =
    "You are given: 1) src_sent: the source sentence; 2) target_sent: the translation hypothesis; "
    "3) explanation: an evaluation text that comments on the translation quality\n"
    "\n"
    "Task: Provide a score (0-100) indicating how FAITHFUL the explanation is to src_sent and "
    "target_sent.\n"
    "\n"
    "Definition of faithfulness:\n"
    "- Every key claim in the explanation must be supported by what is actually present in "
    "src_sent and/or target_sent.\n"
    "- If the explanation invents content, mentions errors that are not evidenced, misquotes words, "
    "or contradicts src/target, score lower.\n"
    "\n"
    "CRITICAL:\n"
    "- You are NOT evaluating translation quality.\n"
    "- A translation can be very bad, but an explanation can still be highly faithful if it "
    "correctly describes that badness.\n"
    "\n"
    "Return ONLY JSON with:\n"
    "{\"faithfulness_score\": int,   // 0-100\n"
    "  \"brief_reason\": string       // <= 40 words, cite the biggest supported or unsupported "
    "claim}\n"
    "\n"
    "Input:\n"
    "src_lang: {{src_lang}}; tgt_lang: {{tgt_lang}}; src_sent: {{src}}; target_sent: {{tgt}}; "
    "explanation: {{explanation}}";

}  // namespace remedy::templates
