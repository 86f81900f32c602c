import { el } from '../dom.js';
import { TOGGLE_NAMES, defaultToggleState, strategyLabel, type ToggleState } from '../toggles.js';

/** Six strategy toggles, all enabled by default, plus the filter trigger.
 * Emits the label string the server's filter endpoint accepts. */
export class ToggleBoard {
  readonly element: HTMLElement;
  private readonly state: ToggleState = defaultToggleState();
  private readonly seedInput: HTMLInputElement;
  private readonly runButton: HTMLButtonElement;

  constructor(private readonly onRun: (configLabel: string, seed: number) => void) {
    const toggles = el('div', { class: 'toggles' });
    for (const name of TOGGLE_NAMES) {
      const box = el('input', { type: 'checkbox', 'data-toggle': name });
      box.checked = this.state[name];
      box.addEventListener('change', () => {
        this.state[name] = box.checked;
      });
      toggles.append(el('label', { class: 'toggle' }, box, name.replace(/_/g, ' ')));
    }
    this.seedInput = el('input', { class: 'seed-input', type: 'number', value: '0' });
    this.runButton = el('button', { class: 'filter-run', type: 'button' }, 'Run filter');
    this.runButton.addEventListener('click', () => {
      this.onRun(this.label(), this.seed());
    });
    this.element = el('section', { class: 'toggle-board' },
      el('h2', {}, 'Strategy'),
      toggles,
      el('label', { class: 'seed' }, 'seed ', this.seedInput),
      this.runButton,
    );
  }

  /** The filter needs a saved clinical description to prompt with; without
   * one the run button is disabled and says why. */
  setReady(hasDescription: boolean): void {
    this.runButton.disabled = !hasDescription;
    if (hasDescription) {
      this.runButton.removeAttribute('title');
    } else {
      this.runButton.setAttribute('title', 'save a clinical description first');
    }
  }

  label(): string {
    return strategyLabel(this.state);
  }

  seed(): number {
    const parsed = Number.parseInt(this.seedInput.value, 10);
    return Number.isNaN(parsed) ? 0 : parsed;
  }
}
