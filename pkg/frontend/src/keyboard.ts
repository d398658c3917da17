// Keyboard-first review: one key per action.

export type Action =
  | 'accept'
  | 'reject'
  | 'edit'
  | 'next-sample'
  | 'prev-sample'
  | 'next-page'
  | 'prev-page'

export const KEY_BINDINGS: Record<string, Action> = {
  a: 'accept',
  r: 'reject',
  e: 'edit',
  j: 'next-sample',
  k: 'prev-sample',
  n: 'next-page',
  p: 'prev-page',
}

export function resolveKey(key: string, editing: boolean): Action | null {
  if (editing) return null // typing in the edit form must not trigger verdicts
  return KEY_BINDINGS[key.toLowerCase()] ?? null
}
