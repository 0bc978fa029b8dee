/* Minimal reset path: no .data, RAM starts zeroed. */
extern char _stack_top;
extern int main(void);

void reset(void)
{
    main();
    for (;;) {
    }
}

__attribute__((section(".vectors"), used))
const void *const vectors[2] = { &_stack_top, (const void *)reset };
