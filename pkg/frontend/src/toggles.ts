// Strategy toggles, in the exact order the server's label grammar uses.
// The board only marshals checkbox state into a label string; the server
// decides what each toggle means.

export const TOGGLE_NAMES = [
  'single_vision_input',
  'leave_time_to_think',
  'conceal_medical_intent',
  'guiding_questions',
  'vision_instructions',
  'highlight_roi',
] as const;

export type ToggleName = (typeof TOGGLE_NAMES)[number];

export type ToggleState = Record<ToggleName, boolean>;

/** Every toggle enabled, the default strategy. */
export function defaultToggleState(): ToggleState {
  const state = {} as ToggleState;
  for (const name of TOGGLE_NAMES) {
    state[name] = true;
  }
  return state;
}

/** Label string the filter endpoint accepts: "all_on" or "<name>_off" parts
 * joined with "+", ordered like TOGGLE_NAMES. */
export function strategyLabel(state: ToggleState): string {
  const off = TOGGLE_NAMES.filter((name) => !state[name]);
  if (off.length === 0) return 'all_on';
  return off.map((name) => `${name}_off`).join('+');
}
