import { el, clear } from '../dom.js';
import type { MetricsPayload } from '../types.js';

const RATE_FIELDS = [
  'fdr', 'fp_per_scan', 'sensitivity', 'specificity', 'f1', 'reject_rate',
] as const;
const COUNT_FIELDS = ['tp', 'fp', 'fn', 'tn', 'n_scans', 'n_sample', 'n_reject'] as const;

/** Read-only metrics display.
 *
 * Values are echoed exactly as the server sent them (String(value), no
 * rounding, no recomputation from the counts), so the panel shows whatever
 * the scoring service decided.
 */
export class MetricsPanel {
  readonly element: HTMLElement;
  private readonly body: HTMLElement;

  constructor(private readonly onLoad: () => void) {
    const load = el('button', { class: 'load-metrics', type: 'button' }, 'Score verdicts');
    load.addEventListener('click', () => this.onLoad());
    this.body = el('div', { class: 'metrics-body' });
    this.element = el('section', { class: 'metrics-panel' },
      el('h2', {}, 'Metrics'),
      load,
      this.body,
    );
  }

  render(payload: MetricsPayload): void {
    clear(this.body);
    const rates = el('dl', { class: 'metrics-values' });
    for (const field of RATE_FIELDS) {
      rates.append(el('dt', {}, field));
      rates.append(el('dd', { 'data-metric': field }, String(payload[field])));
    }
    rates.append(el('dt', {}, 'dice3d_mean'));
    rates.append(
      el('dd', { 'data-metric': 'dice3d_mean' },
        payload.dice3d_mean === null ? '-' : String(payload.dice3d_mean)),
    );
    this.body.append(rates);

    const counts = el('dl', { class: 'metrics-counts' });
    for (const field of COUNT_FIELDS) {
      counts.append(el('dt', {}, field));
      counts.append(el('dd', { 'data-count': field }, String(payload.counts[field])));
    }
    this.body.append(counts);

    if (payload.degenerate.length > 0) {
      this.body.append(
        el('p', { class: 'metrics-degenerate' },
          `degenerate rates: ${payload.degenerate.join(', ')}`),
      );
    }
  }

  showError(message: string): void {
    clear(this.body);
    this.body.append(el('p', { class: 'metrics-error' }, message));
  }
}
