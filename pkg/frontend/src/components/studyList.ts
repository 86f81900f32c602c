import { el, clear } from '../dom.js';
import type { StudySummary } from '../types.js';

/** Sidebar listing of stored studies. */
export class StudyList {
  readonly element: HTMLElement;
  private selected: string | null = null;

  constructor(private readonly onSelect: (studyId: string) => void) {
    this.element = el('nav', { class: 'study-list' });
  }

  render(studies: StudySummary[]): void {
    clear(this.element);
    if (studies.length === 0) {
      this.element.append(el('p', { class: 'study-list-empty' }, 'no studies uploaded'));
      return;
    }
    const list = el('ul', {});
    for (const study of studies) {
      const button = el('button', { type: 'button', 'data-study': study.study_id });
      button.append(el('strong', {}, study.study_id));
      const detail =
        `${study.candidates} candidates, ${study.verdicts} verdicts` +
        (study.has_description ? '' : ', no description');
      button.append(el('small', {}, detail));
      if (study.study_id === this.selected) {
        button.classList.add('selected');
      }
      button.addEventListener('click', () => {
        this.selected = study.study_id;
        for (const other of this.element.querySelectorAll('button')) {
          other.classList.toggle('selected', other === button);
        }
        this.onSelect(study.study_id);
      });
      list.append(el('li', {}, button));
    }
    this.element.append(list);
  }
}
