import { el, clear } from '../dom.js';
import type { LocationDescriptorJson, ParseReportJson } from '../types.js';

/** Description editor with parse chips.
 *
 * The chips always come from the server's parse of the saved text; the
 * editor never interprets the text itself.
 */
export class DescriptionEditor {
  readonly element: HTMLElement;
  private readonly input: HTMLTextAreaElement;
  private readonly chips: HTMLElement;

  constructor(private readonly onSave: (text: string) => void) {
    this.input = el('textarea', {
      class: 'description-input',
      rows: '3',
      placeholder: 'clinical description, e.g. "A 6 mm nodule in the left upper lobe."',
    });
    const save = el('button', { class: 'save-description', type: 'button' }, 'Save description');
    save.addEventListener('click', () => this.onSave(this.input.value));
    this.chips = el('div', { class: 'parse-chips' });
    this.element = el('section', { class: 'description-editor' },
      el('h2', {}, 'Description'),
      this.input,
      save,
      this.chips,
    );
  }

  setText(text: string | null): void {
    this.input.value = text ?? '';
  }

  renderParse(parse: ParseReportJson | null): void {
    clear(this.chips);
    if (!parse || parse.descriptors.length === 0) {
      this.chips.append(el('span', { class: 'chip chip-empty' }, 'no locations parsed'));
      return;
    }
    for (const d of parse.descriptors) {
      this.chips.append(this.chip(d));
    }
  }

  private chip(d: LocationDescriptorJson): HTMLElement {
    const parts: string[] = [];
    if (d.count !== null) parts.push(`${d.count}x`);
    parts.push(d.laterality, d.lobe);
    if (d.size_mm !== null) {
      const [low, high] = [d.size_mm[0], d.size_mm[1]];
      parts.push(low === high ? `${low} mm` : `${low}-${high} mm`);
    }
    const classes = ['chip'];
    if (d.polarity === 'negated') classes.push('chip-negated');
    return el('span', { class: classes.join(' '), 'data-polarity': d.polarity }, parts.join(' '));
  }
}
