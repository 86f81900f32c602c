import { el, clear } from '../dom.js';

export type NoticeKind = 'conflict' | 'error' | 'info';

/** Banner area for service notices. A 409 from the server always surfaces
 * here as a visible conflict notice instead of failing silently. */
export class NoticeArea {
  readonly element: HTMLElement;

  constructor() {
    this.element = el('div', { class: 'notices' });
  }

  show(kind: NoticeKind, message: string): void {
    const notice = el('div', { class: `notice notice-${kind}`, role: 'alert' });
    notice.append(el('span', { class: 'notice-text' }, message));
    const dismiss = el('button', { class: 'notice-dismiss', type: 'button' }, 'dismiss');
    dismiss.addEventListener('click', () => notice.remove());
    notice.append(dismiss);
    this.element.append(notice);
  }

  clearAll(): void {
    clear(this.element);
  }
}
