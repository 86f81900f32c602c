import { el, clear } from '../dom.js';
import type { CandidateCard, DecisionValue } from '../types.js';

const COLUMNS = ['keep', 'discard', 'reject', 'undecided'] as const;
type ColumnKey = (typeof COLUMNS)[number];

/** Candidate cards grouped into Keep/Discard/Reject columns.
 *
 * Placement uses only the verdict the server stored; candidates without one
 * sit in "undecided" no matter how confident the detector was. Human
 * overrides can set keep or discard; reject is reserved for the model
 * gateway, so no override button for it exists.
 */
export class VerdictBoard {
  readonly element: HTMLElement;

  constructor(
    private readonly onOverride: (candidateId: string, decision: DecisionValue) => void,
    private readonly renderUrl: (card: CandidateCard) => string,
  ) {
    this.element = el('section', { class: 'verdict-board' });
  }

  render(cards: CandidateCard[]): void {
    clear(this.element);
    const buckets: Record<ColumnKey, CandidateCard[]> = {
      keep: [], discard: [], reject: [], undecided: [],
    };
    for (const card of cards) {
      const key: ColumnKey = card.verdict ? card.verdict.decision : 'undecided';
      buckets[key].push(card);
    }
    for (const column of COLUMNS) {
      const section = el('section', { class: 'column', 'data-column': column });
      section.append(el('h3', {}, `${column} (${buckets[column].length})`));
      for (const card of buckets[column]) {
        section.append(this.card(card));
      }
      this.element.append(section);
    }
  }

  private card(card: CandidateCard): HTMLElement {
    const node = el('article', { class: 'card', 'data-candidate': card.id });
    const img = el('img', {
      class: 'card-image',
      src: this.renderUrl(card),
      alt: `candidate ${card.id}`,
      loading: 'lazy',
    });
    node.append(img);
    node.append(el('h4', {}, card.id));

    const where = card.location
      ? `${card.location.laterality} ${card.location.lobe} lobe`
      : 'outside lobes';
    node.append(el('p', { class: 'card-location' }, where));
    node.append(el('p', { class: 'card-confidence' }, `confidence ${card.confidence}`));
    if (card.prefilter !== null) {
      node.append(el('span', { class: `badge prefilter-${card.prefilter}` }, card.prefilter));
    }
    if (card.verdict) {
      node.append(el('span', { class: 'badge source' }, card.verdict.source));
      if (card.verdict.rationale) {
        node.append(el('blockquote', { class: 'card-rationale' }, card.verdict.rationale));
      }
    }

    const actions = el('div', { class: 'card-actions' });
    for (const decision of ['keep', 'discard'] as const) {
      const button = el(
        'button',
        { class: `override-${decision}`, type: 'button' },
        `override: ${decision}`,
      );
      button.addEventListener('click', () => this.onOverride(card.id, decision));
      actions.append(button);
    }
    node.append(actions);
    return node;
  }
}
