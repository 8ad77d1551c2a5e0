#include "guide/injection.hpp"

namespace guide::injection::templates {

const std::string_view mode_a_worker = R"TPL([Agent guidelines and action API]

### Reference Plan from a Similar Task
A step-by-step plan was extracted from a demonstration
video showing how a similar task was completed. Use it as
a starting point to guide your approach -- follow the
general workflow, and adapt each step to the current task
and UI state as needed.

VIDEO_PLANNING

> If the plan does not match your current UI state or task
> requirements, trust what you see in the screenshot and
> proceed independently.

### END OF GUIDELINES
[Screenshot + interaction history])TPL";

const std::string_view mode_a_grounding = R"TPL(Reference knowledge from similar tasks (element
locations and descriptions):
{video_grounding}

Based on the screenshot, locate the target element:
{element_description}
Output only the coordinate of one point in your response.
[Current screenshot])TPL";

const std::string_view mode_b_knowledge = R"TPL([Tool definitions and function call schema]

# External Knowledge from Similar Tasks

## Video Planning Reference (Optional Guidance)
You are provided with planning trajectories from
demonstration videos of similar tasks. These serve as
**reference materials only** and should be used with
caution.

**IMPORTANT: Use as Reference, Not Instruction**:
- The video planning is a **suggestion**, not a
  requirement -- always prioritize your own analysis
  of the current task and screenshot
- Video demonstrations may differ from your actual task
  in important ways (different data, different UI state,
  different requirements)
- **Only use video planning when**:
  * The task is highly similar (same application, same
    type of operation, same general workflow)
  * The planning clearly aligns with your current task
    requirements
  * You can verify each suggested step applies to your
    specific situation

**How to Use Video Planning Safely**:
- **Extract General Patterns**: Focus on the overall
  workflow structure, not specific UI elements
- **Verify Applicability**: Confirm each suggestion
  makes sense for your current screenshot and task
- **Adapt Critically**: Modify the approach to fit your
  specific requirements -- never blindly follow steps
- **Trust Your Analysis**: If the video planning
  conflicts with what you observe in the screenshot,
  trust the screenshot

**When to Ignore Video Planning**:
- Low relevance: different application, operation type,
  or workflow
- Conflicts with current state: suggestions don't match
  your screenshot
- Unclear or ambiguous: default to your own analysis

**Video Planning for Similar Tasks**:
{video_planning}

**Critical Reminder**: Always verify each step against
the current screenshot and task requirements before
proceeding. Your independent analysis takes priority.

## Video Grounding Reference (UI Elements from Similar
   Tasks)
You are provided with GUI element descriptions from
demonstration videos. These include element appearance,
position, and function.

**IMPORTANT: Use with Caution**:
- Descriptions come from **similar but different tasks**
  and may not match your current UI
- Use as **hints about what to look for**, not as
  precise instructions

**How to Use Video Grounding Safely**:
- **Verify Against Screenshot**: Always check if
  described elements actually exist in your current
  screenshot before acting on them
- **Look for Analogous Elements**: If described elements
  don't exist, look for similar ones serving the same
  purpose

**GUI Elements from Similar Tasks**:
{video_grounding}

**Critical Reminder**: Always verify against the actual
screenshot before taking any action. The screenshot is
your source of truth.)TPL";

const std::string_view mode_b_response_format = R"TPL(# Response format

For each step, output exactly in this order:

1) **Thought**: Analyze the current screenshot. Use the
   video planning to identify which stage of the
   workflow you are in and what to do next. Use the
   video grounding to help locate the relevant UI
   element -- then verify it exists in your current
   screenshot. Write 2-4 concise sentences.
2) **Action**: A short imperative describing what to do.
3) A single <tool_call>...</tool_call> block with JSON:
   {"name": "computer_use", "arguments": {...}}.

Rules:
- Always start your response with "Thought:".
- Use video planning for workflow understanding; use
  grounding to identify elements.
- Always verify elements in your current screenshot
  before acting. If they differ from the video, trust
  the screenshot.
- Output order: Thought -> Action -> tool_call.
- To finish the task, use action=terminate.

Example:
Thought: The video planning shows inserting a chart as
the next step after setting up the data. I am at that
stage now. The video grounding describes the "Insert"
menu tab as a text label near the top of the LibreOffice
Calc window below the title bar. I can see the Insert
tab in the menu bar of my current screenshot.
Action: Click the Insert tab to open chart insertion
options.
<tool_call>
{"name": "computer_use", "arguments":
  {"action": "left_click", "coordinate": [200, 45]}}
</tool_call>)TPL";

}  // namespace guide::injection::templates
